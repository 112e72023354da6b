"""Command-line entry point.

Subcommands cover the whole pipeline: synthesize data, map trajectories to
decision sequences, featurize, train, evaluate, and run experiment reports.
Exit codes: 0 success, 1 runtime failure, 2 input error. Errors go to
stderr as a single ``wayfind: error: ...`` line. ``WAYFIND_SEED`` supplies
the seed when no flag does.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .dataset import SplitConfig, build_dataset, dataset_hash, fit_label_encoder
from .experiments import (
    SWEEP_PARAMETERS,
    SweepSpec,
    compare_baselines,
    per_task_models,
    profile_ablation,
    render_report,
    sweep,
    usage_stats,
)
from .fileio import (
    read_control_points,
    read_dataset,
    read_model,
    read_network,
    read_profiles,
    read_sequences,
    read_trajectories,
    read_transforms,
    sha256_file,
    write_control_points,
    write_dataset,
    write_model,
    write_network,
    write_profiles,
    write_provenance,
    write_sequences,
    write_trajectories,
)
from .mapping import MappingConfig, estimate_floor_transforms, extract_decision_sequence
from .metrics import evaluate_model, group_eval, per_node_report
from .models import ForestParams, MLRConfig, mlr_train, rf_train
from .network import describe, validate_numbering
from .synthetic import (
    BuildingSpec,
    SynthConfig,
    build_building,
    default_policies,
    default_tasks,
    default_virtual_transforms,
    generate_profiles,
    generate_sequences,
    make_control_points,
    sequences_to_trajectories,
)

log = logging.getLogger(__name__)

_GROUP_ALIASES = {"familiarity": "building_familiarity"}


class _Parser(argparse.ArgumentParser):
    """argparse with single-line errors on stderr, exit code 2."""

    def error(self, message):
        self.exit(2, f"wayfind: error: {message}\n")


def resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("WAYFIND_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"WAYFIND_SEED must be an integer, got {env!r}") from None
    return 0


def _load(reader, path):
    """Read a file, prefixing parse errors with the offending path."""
    try:
        return reader(path)
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from e


def _read_json(path):
    with open(path) as f:
        return json.load(f)


def _digests(paths) -> dict[str, str]:
    # keyed by basename so artifacts stay byte-identical across directories
    return {Path(p).name: sha256_file(p) for p in paths}


def _provenance_doc(seed: int, inputs=(), outputs=(), **extra) -> dict:
    return {
        "tool_version": __version__,
        "seed": seed,
        "inputs": _digests(inputs),
        "outputs": _digests(outputs),
        **extra,
    }


# -- net -----------------------------------------------------------------------


def cmd_net_validate(args) -> int:
    net = _load(read_network, args.file)
    violations = validate_numbering(net)
    for v in violations:
        print(v)
    if violations:
        print(f"wayfind: error: {args.file}: {len(violations)} numbering violations",
              file=sys.stderr)
        return 2
    print(f"ok: {len(net.nodes)} nodes, {len(net.links)} links, numbering valid")
    return 0


def cmd_net_stats(args) -> int:
    net = _load(read_network, args.file)
    print(json.dumps(describe(net), indent=2, sort_keys=True))
    return 0


# -- synth -----------------------------------------------------------------------


def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed)
    if args.spec is not None:
        doc = _load(_read_json, args.spec)
        try:
            spec = BuildingSpec(**doc)
        except TypeError as e:
            raise ValueError(f"{args.spec}: {e}") from e
    else:
        spec = BuildingSpec()
    net = build_building(spec)
    tasks = default_tasks(net)
    sequences = generate_sequences(net, tasks, default_policies(seed), n_agents=args.agents)
    transforms = tuple(default_virtual_transforms(net.levels))
    cfg = SynthConfig(
        n_agents=args.agents,
        sample_interval_ms=args.interval_ms,
        position_noise_m=args.noise,
        virtual_frame_transform=transforms,
    )

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_network(net, out / "network.json")
    write_control_points(make_control_points(net, transforms), out / "control_points.csv")
    write_trajectories(sequences_to_trajectories(sequences, net, cfg, seed=seed),
                       out / "trajectories.csv")
    write_sequences(sequences, out / "sequences.csv")
    participants = sorted({s.participant for s in sequences})
    write_profiles(generate_profiles(participants, seed=seed), out / "profiles.csv")

    artifacts = ["network.json", "control_points.csv", "trajectories.csv",
                 "sequences.csv", "profiles.csv"]
    doc = _provenance_doc(
        seed,
        inputs=[args.spec] if args.spec else [],
        outputs=[out / a for a in artifacts],
        building_spec=dataclasses.asdict(spec),
        n_agents=args.agents,
        sample_interval_ms=args.interval_ms,
        position_noise_m=args.noise,
    )
    write_provenance(out, "synth", doc)
    stats = usage_stats(sequences)
    means = ", ".join(f"task {t}: {s['mean']:.1f}"
                      for t, s in sorted(stats["lengths"].items()))
    print(f"wrote {len(artifacts)} artifacts to {out}")
    print(f"{len(sequences)} sequences from {len(participants)} agents; "
          f"mean lengths {means}")
    return 0


# -- map -------------------------------------------------------------------------


def cmd_map(args) -> int:
    net = _load(read_network, args.net)
    if str(args.transforms).endswith(".json"):
        transforms = _load(read_transforms, args.transforms)
    else:
        transforms = estimate_floor_transforms(_load(read_control_points, args.transforms))
    trajectories = _load(read_trajectories, args.traj)
    cfg = MappingConfig(snap_radius=args.snap_radius)
    sequences = [extract_decision_sequence(t, net, transforms, cfg) for t in trajectories]
    write_sequences(sequences, args.out)

    out_dir = Path(args.out).parent
    doc = _provenance_doc(
        resolve_seed(args.seed),
        inputs=[args.net, args.transforms, args.traj],
        outputs=[args.out],
        snap_radius=args.snap_radius,
    )
    write_provenance(out_dir, "map", doc)
    n_nodes = sum(len(s) for s in sequences)
    print(f"wrote {len(sequences)} sequences ({n_nodes} decision points) to {args.out}")
    return 0


# -- featurize ---------------------------------------------------------------------


def cmd_featurize(args) -> int:
    sequences = _load(read_sequences, args.sequences)
    profiles = _load(read_profiles, args.profiles) if args.profiles else None
    encoder = None
    if args.network:
        net = _load(read_network, args.network)
        encoder = fit_label_encoder(net.nodes.keys())
    ds = build_dataset(sequences, lag=args.lag, node_encoder=encoder, profiles=profiles)
    write_dataset(ds, args.out)

    inputs = [args.sequences]
    if args.profiles:
        inputs.append(args.profiles)
    if args.network:
        inputs.append(args.network)
    doc = _provenance_doc(
        resolve_seed(args.seed),
        inputs=inputs,
        outputs=[args.out, str(args.out) + ".encoders.json"],
        lag=args.lag,
        dataset_sha256=dataset_hash(ds),
    )
    write_provenance(Path(args.out).parent, "featurize", doc)
    print(f"wrote {len(ds)} samples x {len(ds.feature_names)} features "
          f"({ds.n_classes} classes) to {args.out}")
    return 0


# -- train -----------------------------------------------------------------------


_RF_FIELDS = {f.name for f in dataclasses.fields(ForestParams)}
_MLR_FIELDS = {f.name for f in dataclasses.fields(MLRConfig)}


def cmd_train(args) -> int:
    ds = _load(read_dataset, args.data)
    params_doc = dict(_load(_read_json, args.params)) if args.params else {}
    if args.seed is not None:
        params_doc["seed"] = args.seed
    elif "seed" not in params_doc:
        params_doc["seed"] = resolve_seed(None)

    allowed = _RF_FIELDS if args.algo == "rf" else _MLR_FIELDS
    unknown = sorted(set(params_doc) - allowed)
    if unknown:
        raise ValueError(f"unknown {args.algo} parameters {unknown}; allowed: {sorted(allowed)}")

    if args.algo == "rf":
        model = rf_train(ds, ForestParams(**params_doc))
        summary = f"{model.params.n_trees} trees, depth <= {model.params.max_depth}"
    else:
        model = mlr_train(ds, MLRConfig(**params_doc))
        summary = (f"{model.training_log['iterations']} iterations, "
                   f"log-likelihood {model.training_log['final_log_likelihood']:.6g}")

    manifest = str(args.data) + ".encoders.json"
    encoder_ref = {"file": Path(manifest).name, "sha256": sha256_file(manifest)}
    write_model(model, args.out, encoder_ref)

    doc = _provenance_doc(
        params_doc["seed"],
        inputs=[args.data, manifest] + ([args.params] if args.params else []),
        outputs=[args.out],
        algo=args.algo,
        params=params_doc,
        dataset_sha256=dataset_hash(ds),
    )
    write_provenance(Path(args.out).parent, "train", doc)
    print(f"trained {args.algo} on {len(ds)} samples ({summary}); wrote {args.out}")
    return 0


# -- eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    model = _load(read_model, args.model)
    ds = _load(read_dataset, args.data)
    if tuple(model.feature_names) != tuple(ds.feature_names):
        raise ValueError(
            f"model features {list(model.feature_names)} do not match "
            f"dataset features {list(ds.feature_names)}"
        )

    report = evaluate_model(model, ds)
    print(f"samples            {report.n}")
    print(f"accuracy           {report.accuracy:.4f}")
    print(f"balanced accuracy  {report.balanced_accuracy:.4f}")

    recalls = per_node_report(report.confusion, ds.node_encoder)
    print("\nper-node recall (nodes with at least one true sample):")
    for node_id, recall in sorted(recalls.items()):
        print(f"  {node_id:8s} {recall:.4f}")

    if args.group_by != "none":
        attr = _GROUP_ALIASES.get(args.group_by, args.group_by)
        if not args.profiles:
            raise ValueError(f"--group-by {args.group_by} needs --profiles")
        profiles = _load(read_profiles, args.profiles)
        groups = group_eval(ds, model, attr, profiles)
        print(f"\nby {args.group_by}:")
        for key in sorted(groups, key=str):
            g = groups[key]
            print(f"  {key!s:14s} n={g.n:<6d} accuracy {g.accuracy:.4f} "
                  f"balanced {g.balanced_accuracy:.4f}")

    if args.per_node:
        with open(args.per_node, "w") as f:
            f.write("node_id,recall\n")
            for node_id, recall in sorted(recalls.items()):
                f.write(f"{node_id},%.9g\n" % recall)
        print(f"\nwrote per-node recalls to {args.per_node}")

    print("\nprovenance:")
    print(f"  model  sha256 {sha256_file(args.model)}")
    print(f"  data   sha256 {sha256_file(args.data)}")
    return 0


# -- exp -------------------------------------------------------------------------


def _sweep_values(args) -> tuple[int, ...]:
    if args.values and (args.from_ is not None or args.to is not None):
        raise ValueError("give either --values or --from/--to/--step, not both")
    if args.values:
        try:
            return tuple(int(v) for v in args.values.split(","))
        except ValueError:
            raise ValueError(f"--values must be comma-separated integers, got {args.values!r}") from None
    if args.from_ is not None or args.to is not None:
        if args.from_ is None or args.to is None:
            raise ValueError("--from and --to must be given together")
        return tuple(range(args.from_, args.to + 1, args.step))
    return ()


def cmd_exp(args) -> int:
    sequences = _load(read_sequences, args.data)
    profiles = _load(read_profiles, args.profiles) if args.profiles else None
    seed = resolve_seed(args.seed)
    split_cfg = SplitConfig(seed=seed)
    forest_params = ForestParams(seed=seed)

    if args.exp_command == "compare":
        ds = build_dataset(sequences, lag=args.lag, profiles=profiles)
        report = compare_baselines(ds, forest_params, MLRConfig(), split_cfg)
    elif args.exp_command == "per-task":
        ds = build_dataset(sequences, lag=args.lag, profiles=profiles)
        report = per_task_models(ds, forest_params, split_cfg)
    elif args.exp_command == "ablate":
        if profiles is None:
            raise ValueError("ablate compares with/without profile features; --profiles is required")
        ds = build_dataset(sequences, lag=args.lag, profiles=profiles)
        report = profile_ablation(ds, forest_params, split_cfg)
    else:
        spec = SweepSpec(args.param, _sweep_values(args), repetitions=args.reps, seed=seed)
        if args.param == "lag":
            if profiles is not None:
                log.warning("lag sweeps refeaturize without profile features; --profiles ignored")
            source = sequences
        else:
            source = build_dataset(sequences, lag=args.lag, profiles=profiles)
        report = sweep(source, spec, forest_params, split_cfg, lag=args.lag, jobs=args.jobs)

    text = render_report(report)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote report to {args.out}")
    else:
        print(text, end="")
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed (default: WAYFIND_SEED env var, then 0)")
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug")

    parser = _Parser(prog="wayfind",
                     description="Decision-point prediction pipeline for indoor wayfinding.")
    parser.add_argument("--version", action="version", version=f"wayfind {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p_net = sub.add_parser("net", help="validate or summarize a building network file")
    net_sub = p_net.add_subparsers(dest="net_command", required=True, metavar="action")
    p = net_sub.add_parser("validate", parents=[common],
                           help="check structure and node numbering")
    p.add_argument("file")
    p.set_defaults(func=cmd_net_validate)
    p = net_sub.add_parser("stats", parents=[common], help="print summary counts")
    p.add_argument("file")
    p.set_defaults(func=cmd_net_stats)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a building plus synthetic trajectories")
    p.add_argument("--out-dir", required=True, help="directory for the emitted artifacts")
    p.add_argument("--spec", default=None, help="building spec overrides (structured text)")
    p.add_argument("--agents", type=int, default=70)
    p.add_argument("--noise", type=float, default=0.0, help="planar position noise sigma, meters")
    p.add_argument("--interval-ms", type=int, default=10, help="sample interval, milliseconds")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("map", parents=[common],
                       help="map trajectories onto decision-point sequences")
    p.add_argument("--net", required=True, help="building network file")
    p.add_argument("--transforms", required=True,
                   help="transform file (.json) or control-point table to estimate from")
    p.add_argument("--traj", required=True, help="trajectory table")
    p.add_argument("--out", required=True, help="output sequence table")
    p.add_argument("--snap-radius", type=float, default=2.0, metavar="R")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("featurize", parents=[common],
                       help="build a lagged classification dataset from sequences")
    p.add_argument("--sequences", required=True)
    p.add_argument("--out", required=True, help="dataset table (encoder manifest written beside it)")
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--profiles", default=None, help="append participant profile features")
    p.add_argument("--network", default=None,
                   help="fit the node encoder over this network's full node set")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train a classifier")
    p.add_argument("--algo", required=True, choices=("rf", "mlr"))
    p.add_argument("--data", required=True, help="dataset table from featurize")
    p.add_argument("--out", required=True, help="model output file")
    p.add_argument("--params", default=None, help="hyperparameter overrides (structured text)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--group-by", default="none",
                   choices=("gender", "device", "familiarity", "none"))
    p.add_argument("--profiles", default=None, help="profile table (needed for --group-by)")
    p.add_argument("--per-node", default=None, metavar="FILE",
                   help="write per-node recalls as a delimited table")
    p.set_defaults(func=cmd_eval)

    p_exp = sub.add_parser("exp", help="experiment reports over a sequence file")
    exp_sub = p_exp.add_subparsers(dest="exp_command", required=True, metavar="experiment")
    for name, help_text in (
        ("compare", "forest vs. logistic vs. majority baseline"),
        ("per-task", "one model per task"),
        ("ablate", "with vs. without profile features"),
        ("sweep", "retrain over a hyperparameter grid"),
    ):
        p = exp_sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--data", required=True, help="sequence table (featurized internally)")
        p.add_argument("--profiles", default=None)
        p.add_argument("--lag", type=int, default=1)
        p.add_argument("--out", default=None, help="write the report here instead of stdout")
        if name == "sweep":
            p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
            p.add_argument("--from", dest="from_", type=int, default=None, metavar="N")
            p.add_argument("--to", type=int, default=None, metavar="N")
            p.add_argument("--step", type=int, default=1, metavar="N")
            p.add_argument("--values", default=None, help="comma-separated grid, e.g. 1,2,3,5")
            p.add_argument("--reps", type=int, default=1, help="repetitions per grid value")
            p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
        p.set_defaults(func=cmd_exp)

    return parser


_INPUT_ERRORS = (FileNotFoundError, IsADirectoryError, NotADirectoryError,
                 PermissionError, ValueError, KeyError)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = logging.WARNING
    if getattr(args, "verbose", 0) == 1:
        level = logging.INFO
    elif getattr(args, "verbose", 0) >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.func(args)
    except _INPUT_ERRORS as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"wayfind: error: {msg}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"wayfind: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
