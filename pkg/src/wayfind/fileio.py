"""Readers and writers for every on-disk artifact.

All writers are deterministic: fixed column orders, sorted JSON keys,
fixed float formatting. Provenance documents deliberately omit wall-clock
time; the timestamp goes to a separate sidecar so repeated runs with the
same inputs produce byte-identical primary artifacts.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from . import network as _network
from .dataset import (
    Dataset,
    LabelEncoder,
    PROFILE_FIELDS,
    PersonProfile,
    Sample,
)
from .mapping import ControlPointPair, DecisionSequence, FloorTransform, Trajectory
from .models import (
    ForestParams,
    LogisticModel,
    MLRConfig,
    RandomForestModel,
    tree_from_dict,
    tree_to_dict,
)

TRAJECTORY_COLUMNS = [
    "participant", "task", "t_ms",
    "x", "y", "z", "yaw", "roll", "pitch",
    "gaze_x", "gaze_y", "gaze_z",
]

MODEL_FORMAT = 1
_FLOAT_FMT = "%.9g"


def _dump_json(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- network ------------------------------------------------------------------


def write_network(net: _network.IndoorNetwork, path: str | Path) -> None:
    _dump_json(_network.serialize(net), Path(path))


def read_network(path: str | Path) -> _network.IndoorNetwork:
    with open(path) as f:
        return _network.build_network(json.load(f))


# -- control points and transforms ---------------------------------------------


def write_control_points(pairs: Sequence[ControlPointPair], path: str | Path) -> None:
    with open(path, "w") as f:
        f.write("level,vx,vy,vz,mx,my\n")
        for p in pairs:
            vals = (*p.virtual, *p.map_xy)
            f.write(f"{p.level}," + ",".join(_FLOAT_FMT % v for v in vals) + "\n")


def read_control_points(path: str | Path) -> list[ControlPointPair]:
    df = pd.read_csv(path)
    needed = {"level", "vx", "vy", "vz", "mx", "my"}
    if not needed.issubset(df.columns):
        raise ValueError(f"control point file lacks columns {sorted(needed - set(df.columns))}")
    return [
        ControlPointPair(int(r.level), (float(r.vx), float(r.vy), float(r.vz)),
                         (float(r.mx), float(r.my)))
        for r in df.itertuples()
    ]


def write_transforms(transforms: Sequence[FloorTransform], path: str | Path) -> None:
    docs = []
    for tf in transforms:
        d = tf.as_dict()
        # unbounded z intervals serialize as null
        d["z_min"] = None if not math.isfinite(d["z_min"]) else d["z_min"]
        d["z_max"] = None if not math.isfinite(d["z_max"]) else d["z_max"]
        docs.append(d)
    _dump_json({"format": 1, "transforms": docs}, Path(path))


def read_transforms(path: str | Path) -> list[FloorTransform]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != 1:
        raise ValueError(f"unsupported transforms format {doc.get('format')!r}")
    out = []
    for d in doc["transforms"]:
        d = dict(d)
        d["z_min"] = -math.inf if d.get("z_min") is None else d["z_min"]
        d["z_max"] = math.inf if d.get("z_max") is None else d["z_max"]
        out.append(FloorTransform.from_dict(d))
    return out


# -- trajectories ----------------------------------------------------------------


def write_trajectories(trajectories: Iterable[Trajectory], path: str | Path) -> None:
    """Stream trajectories to CSV; accepts a generator without materializing it."""
    first = True
    with open(path, "w") as f:
        for traj in trajectories:
            n = len(traj)
            df = pd.DataFrame({
                "participant": [traj.participant] * n,
                "task": traj.task,
                "t_ms": traj.t_ms,
                "x": traj.pos[:, 0], "y": traj.pos[:, 1], "z": traj.pos[:, 2],
                "yaw": traj.head[:, 0], "roll": traj.head[:, 1], "pitch": traj.head[:, 2],
                "gaze_x": traj.gaze[:, 0], "gaze_y": traj.gaze[:, 1], "gaze_z": traj.gaze[:, 2],
            })
            df.to_csv(f, columns=TRAJECTORY_COLUMNS, index=False, header=first,
                      float_format=_FLOAT_FMT)
            first = False
        if first:
            f.write(",".join(TRAJECTORY_COLUMNS) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    df = pd.read_csv(path, dtype={"participant": str})
    missing = [c for c in TRAJECTORY_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"trajectory file lacks columns {missing}")
    out = []
    for (pid, task), g in df.groupby(["participant", "task"], sort=False):
        out.append(Trajectory(
            participant=str(pid),
            task=int(task),
            t_ms=g["t_ms"].to_numpy(),
            pos=g[["x", "y", "z"]].to_numpy(),
            head=g[["yaw", "roll", "pitch"]].to_numpy(),
            gaze=g[["gaze_x", "gaze_y", "gaze_z"]].to_numpy(),
        ))
    return out


# -- decision sequences ------------------------------------------------------------


def write_sequences(sequences: Sequence[DecisionSequence], path: str | Path) -> None:
    with open(path, "w") as f:
        f.write("participant,task,ordinal,node_id\n")
        for seq in sequences:
            for i, node in enumerate(seq.nodes):
                f.write(f"{seq.participant},{seq.task},{i},{node}\n")


def read_sequences(path: str | Path) -> list[DecisionSequence]:
    df = pd.read_csv(path, dtype={"participant": str, "node_id": str})
    needed = {"participant", "task", "ordinal", "node_id"}
    if not needed.issubset(df.columns):
        raise ValueError(f"sequence file lacks columns {sorted(needed - set(df.columns))}")
    out = []
    for (pid, task), g in df.groupby(["participant", "task"], sort=False):
        g = g.sort_values("ordinal")
        out.append(DecisionSequence(str(pid), int(task), tuple(g["node_id"])))
    return out


# -- profiles ------------------------------------------------------------------------


def write_profiles(profiles: Mapping[str, PersonProfile], path: str | Path) -> None:
    with open(path, "w") as f:
        f.write("participant," + ",".join(PROFILE_FIELDS) + "\n")
        for pid in sorted(profiles):
            p = profiles[pid]
            cells = [pid]
            for name in PROFILE_FIELDS:
                v = getattr(p, name)
                cells.append(_FLOAT_FMT % v if isinstance(v, float) else str(v))
            f.write(",".join(cells) + "\n")


def read_profiles(path: str | Path) -> dict[str, PersonProfile]:
    df = pd.read_csv(path, dtype={"participant": str})
    missing = [c for c in ("participant",) + PROFILE_FIELDS if c not in df.columns]
    if missing:
        raise ValueError(f"profile file lacks columns {missing}")
    out = {}
    for r in df.itertuples():
        fields = {name: getattr(r, name) for name in PROFILE_FIELDS}
        fields["age"] = float(fields["age"])
        fields["height"] = float(fields["height"])
        out[str(r.participant)] = PersonProfile(**fields)
    return out


# -- datasets ---------------------------------------------------------------------


def _encoder_manifest_path(dataset_path: str | Path) -> Path:
    return Path(str(dataset_path) + ".encoders.json")


def write_dataset(ds: Dataset, path: str | Path) -> None:
    """Delimited samples plus a structured encoder-manifest sidecar."""
    path = Path(path)
    with open(path, "w") as f:
        f.write("participant,task," + ",".join(ds.feature_names) + ",target\n")
        for s in ds.samples:
            feats = ",".join(_FLOAT_FMT % v for v in s.features)
            f.write(f"{s.participant},{s.task},{feats},{s.target}\n")
    manifest = {
        "format": 1,
        "feature_names": list(ds.feature_names),
        "node_encoder": {"categories": list(ds.node_encoder.categories)},
        "profile_encoders": None if ds.profile_encoders is None else {
            name: {"categories": list(enc.categories)}
            for name, enc in sorted(ds.profile_encoders.items())
        },
    }
    _dump_json(manifest, _encoder_manifest_path(path))


def read_dataset(path: str | Path) -> Dataset:
    manifest_path = _encoder_manifest_path(path)
    if not manifest_path.exists():
        raise ValueError(f"missing encoder manifest {manifest_path}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    if manifest.get("format") != 1:
        raise ValueError(f"unsupported encoder manifest format {manifest.get('format')!r}")
    feature_names = tuple(manifest["feature_names"])
    node_encoder = LabelEncoder(tuple(manifest["node_encoder"]["categories"]))
    profile_encoders = None
    if manifest["profile_encoders"] is not None:
        profile_encoders = {
            name: LabelEncoder(tuple(doc["categories"]))
            for name, doc in manifest["profile_encoders"].items()
        }
    df = pd.read_csv(path, dtype={"participant": str})
    # the "task" feature shares its name with the metadata column, so the
    # feature block is addressed by position: participant, task, features..., target
    expected_width = 3 + len(feature_names)
    cols = list(df.columns)
    if (len(cols) != expected_width or cols[0] != "participant"
            or cols[1] != "task" or cols[-1] != "target"):
        raise ValueError(
            f"dataset file has columns {cols}, expected participant, task, "
            f"{len(feature_names)} feature columns, target"
        )
    feats = df.iloc[:, 2:-1].to_numpy(dtype=float)
    targets = df.iloc[:, -1].to_numpy(dtype=int)
    tasks = df.iloc[:, 1].to_numpy(dtype=int)
    samples = tuple(
        Sample(tuple(feats[i]), int(targets[i]), str(df.iat[i, 0]), int(tasks[i]))
        for i in range(len(df))
    )
    return Dataset(samples, node_encoder, feature_names, profile_encoders)


# -- models -----------------------------------------------------------------------


def write_model(model: RandomForestModel | LogisticModel, path: str | Path,
                encoder_ref: Mapping | None = None) -> None:
    if isinstance(model, RandomForestModel):
        doc = {
            "model_format": MODEL_FORMAT,
            "algo": "rf",
            "params": {
                "n_trees": model.params.n_trees,
                "max_depth": model.params.max_depth,
                "mtry": model.params.mtry,
                "seed": model.params.seed,
                "min_samples_split": model.params.min_samples_split,
                "bootstrap": model.params.bootstrap,
            },
            "n_classes": model.n_classes,
            "feature_names": list(model.feature_names),
            "trees": [tree_to_dict(t) for t in model.trees],
        }
    else:
        log = dict(model.training_log)
        log.pop("objective_trace", None)
        doc = {
            "model_format": MODEL_FORMAT,
            "algo": "mlr",
            "weights": [[float(v) for v in row] for row in model.weights],
            "feature_names": list(model.feature_names),
            "training_log": log,
        }
    if encoder_ref is not None:
        doc["encoder_manifest"] = dict(encoder_ref)
    _dump_json(doc, Path(path))


def read_model(path: str | Path) -> RandomForestModel | LogisticModel:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("model_format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('model_format')!r}")
    if doc["algo"] == "rf":
        p = doc["params"]
        params = ForestParams(
            n_trees=int(p["n_trees"]), max_depth=int(p["max_depth"]),
            mtry=p["mtry"] if p["mtry"] == "auto" else int(p["mtry"]),
            seed=int(p["seed"]), min_samples_split=int(p["min_samples_split"]),
            bootstrap=bool(p["bootstrap"]),
        )
        trees = [tree_from_dict(t) for t in doc["trees"]]
        return RandomForestModel(trees, params, int(doc["n_classes"]),
                                 tuple(doc["feature_names"]))
    if doc["algo"] == "mlr":
        return LogisticModel(np.array(doc["weights"], dtype=float),
                             tuple(doc["feature_names"]), doc.get("training_log", {}))
    raise ValueError(f"unknown model algo {doc['algo']!r}")


# -- provenance ----------------------------------------------------------------------


def write_provenance(out_dir: str | Path, command: str, doc: Mapping) -> Path:
    """Deterministic provenance JSON plus a timestamp sidecar.

    The primary document carries no wall-clock data, keeping reruns
    byte-identical; the sidecar holds the timestamp alone.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    body = {"command": command, **doc}
    path = out_dir / f"provenance-{command}.json"
    _dump_json(body, path)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat()
    (out_dir / f"provenance-{command}.timestamp").write_text(stamp + "\n")
    return path
