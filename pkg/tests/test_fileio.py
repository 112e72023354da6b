import json
import math

import numpy as np
import pytest

from wayfind.dataset import build_dataset
from wayfind.fileio import (
    MODEL_FORMAT,
    TRAJECTORY_COLUMNS,
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
    write_transforms,
)
from wayfind.mapping import DecisionSequence, FloorTransform
from wayfind.models import ForestParams, MLRConfig, mlr_train, rf_train
from wayfind.network import serialize
from wayfind.synthetic import (
    AgentPolicy,
    BuildingSpec,
    build_building,
    default_tasks,
    default_virtual_transforms,
    generate_profiles,
    generate_sequences,
    make_control_points,
    sequences_to_trajectories,
)


@pytest.fixture(scope="module")
def small_net():
    return build_building(BuildingSpec(nodes_per_corridor=5, n_levels=2))


@pytest.fixture(scope="module")
def small_seqs(small_net):
    return generate_sequences(small_net, default_tasks(small_net),
                              AgentPolicy(deviation_prob=0.1), n_agents=3)


@pytest.fixture(scope="module")
def small_ds(small_seqs):
    participants = sorted({s.participant for s in small_seqs})
    return build_dataset(small_seqs, lag=2, profiles=generate_profiles(participants))


# -- network -------------------------------------------------------------------------


def test_network_round_trip(tmp_path, small_net):
    path = tmp_path / "network.json"
    write_network(small_net, path)
    again = read_network(path)
    assert serialize(again) == serialize(small_net)


# -- control points and transforms ------------------------------------------------------


def test_control_points_round_trip(tmp_path, small_net):
    pairs = make_control_points(small_net, default_virtual_transforms(small_net.levels))
    path = tmp_path / "control_points.csv"
    write_control_points(pairs, path)
    again = read_control_points(path)
    assert len(again) == len(pairs)
    for a, b in zip(again, pairs):
        assert a.level == b.level
        assert np.allclose(a.virtual, b.virtual, atol=1e-6)
        assert np.allclose(a.map_xy, b.map_xy, atol=1e-6)


def test_control_points_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("level,vx,vy\n1,0,0\n")
    with pytest.raises(ValueError, match="lacks columns"):
        read_control_points(path)


def test_transforms_round_trip_with_unbounded_z(tmp_path):
    transforms = [
        FloorTransform(level=1, scale=1.5, rotation=0.3, tx=10.0, ty=-4.0,
                       z_min=-math.inf, z_max=2.5),
        FloorTransform(level=2, scale=2.0, rotation=-0.2, tx=0.0, ty=0.0,
                       z_min=2.5, z_max=math.inf),
    ]
    path = tmp_path / "transforms.json"
    write_transforms(transforms, path)
    raw = json.loads(path.read_text())
    assert raw["transforms"][0]["z_min"] is None
    assert raw["transforms"][1]["z_max"] is None
    again = read_transforms(path)
    assert again == transforms


def test_transforms_format_checked(tmp_path):
    path = tmp_path / "transforms.json"
    path.write_text(json.dumps({"format": 2, "transforms": []}))
    with pytest.raises(ValueError, match="format"):
        read_transforms(path)


# -- trajectories ------------------------------------------------------------------------


def test_trajectories_round_trip_streaming(tmp_path, small_net, small_seqs):
    subset = small_seqs[:3]
    path = tmp_path / "trajectories.csv"
    # pass the lazy generator straight through
    write_trajectories(sequences_to_trajectories(subset, small_net), path)
    originals = list(sequences_to_trajectories(subset, small_net))
    again = read_trajectories(path)
    assert len(again) == len(originals)
    for a, b in zip(again, originals):
        assert (a.participant, a.task) == (b.participant, b.task)
        assert np.array_equal(a.t_ms, b.t_ms)
        assert np.allclose(a.pos, b.pos, atol=1e-6)
        assert np.allclose(a.head, b.head, atol=1e-6)
        assert np.allclose(a.gaze, b.gaze, atol=1e-6)


def test_empty_trajectory_file(tmp_path):
    path = tmp_path / "trajectories.csv"
    write_trajectories([], path)
    assert path.read_text() == ",".join(TRAJECTORY_COLUMNS) + "\n"
    assert read_trajectories(path) == []


def test_trajectories_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("participant,task,t_ms\np1,1,0\n")
    with pytest.raises(ValueError, match="lacks columns"):
        read_trajectories(path)


# -- sequences ---------------------------------------------------------------------------


def test_sequences_round_trip(tmp_path, small_seqs):
    path = tmp_path / "sequences.csv"
    write_sequences(small_seqs, path)
    assert read_sequences(path) == list(small_seqs)


def test_sequences_ordinal_restores_order(tmp_path):
    path = tmp_path / "sequences.csv"
    path.write_text(
        "participant,task,ordinal,node_id\n"
        "p1,1,2,103\n"
        "p1,1,0,101\n"
        "p1,1,1,102\n"
    )
    assert read_sequences(path) == [DecisionSequence("p1", 1, ("101", "102", "103"))]


def test_sequences_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("participant,task\np1,1\n")
    with pytest.raises(ValueError, match="lacks columns"):
        read_sequences(path)


# -- profiles ---------------------------------------------------------------------------


def test_profiles_round_trip(tmp_path):
    profiles = generate_profiles([f"p{i:03d}" for i in range(1, 8)], seed=9)
    path = tmp_path / "profiles.csv"
    write_profiles(profiles, path)
    assert read_profiles(path) == profiles


def test_profiles_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("participant,gender\np1,female\n")
    with pytest.raises(ValueError, match="lacks columns"):
        read_profiles(path)


# -- datasets ---------------------------------------------------------------------------


def test_dataset_round_trip_with_profiles(tmp_path, small_ds):
    path = tmp_path / "dataset.csv"
    write_dataset(small_ds, path)
    again = read_dataset(path)
    assert again.feature_names == small_ds.feature_names
    assert again.node_encoder == small_ds.node_encoder
    assert set(again.profile_encoders) == set(small_ds.profile_encoders)
    assert again.profile_encoders == small_ds.profile_encoders
    assert len(again) == len(small_ds)
    for a, b in zip(again.samples, small_ds.samples):
        assert (a.participant, a.task, a.target) == (b.participant, b.task, b.target)
        assert np.allclose(a.features, b.features, atol=1e-9)


def test_dataset_round_trip_without_profiles(tmp_path, small_seqs):
    ds = build_dataset(small_seqs, lag=1)
    path = tmp_path / "dataset.csv"
    write_dataset(ds, path)
    again = read_dataset(path)
    assert again.profile_encoders is None
    assert again.samples == ds.samples


def test_dataset_requires_manifest(tmp_path, small_seqs):
    ds = build_dataset(small_seqs, lag=1)
    path = tmp_path / "dataset.csv"
    write_dataset(ds, path)
    (tmp_path / "dataset.csv.encoders.json").unlink()
    with pytest.raises(ValueError, match="manifest"):
        read_dataset(path)


def test_dataset_manifest_format_checked(tmp_path, small_seqs):
    ds = build_dataset(small_seqs, lag=1)
    path = tmp_path / "dataset.csv"
    write_dataset(ds, path)
    manifest_path = tmp_path / "dataset.csv.encoders.json"
    doc = json.loads(manifest_path.read_text())
    doc["format"] = 99
    manifest_path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="format"):
        read_dataset(path)


def test_dataset_header_shape_checked(tmp_path, small_seqs):
    ds = build_dataset(small_seqs, lag=1)
    path = tmp_path / "dataset.csv"
    write_dataset(ds, path)
    body = path.read_text().splitlines()
    body[0] = "participant," + body[0]  # extra leading column
    path.write_text("\n".join(body) + "\n")
    with pytest.raises(ValueError, match="columns"):
        read_dataset(path)


# -- models -----------------------------------------------------------------------------


def test_rf_model_round_trip(tmp_path, small_ds):
    model = rf_train(small_ds, ForestParams(n_trees=3, seed=11))
    path = tmp_path / "model.json"
    write_model(model, path, encoder_ref={"file": "dataset.csv.encoders.json", "sha256": "x"})
    again = read_model(path)
    assert again.params == model.params
    assert again.n_classes == model.n_classes
    assert again.feature_names == model.feature_names
    X = small_ds.X()
    assert np.array_equal(again.predict(X), model.predict(X))


def test_mlr_model_round_trip(tmp_path, small_ds):
    model = mlr_train(small_ds, MLRConfig(max_iters=40))
    path = tmp_path / "model.json"
    write_model(model, path)
    again = read_model(path)
    assert np.array_equal(again.weights, model.weights)
    assert "objective_trace" not in again.training_log
    assert again.training_log["iterations"] == model.training_log["iterations"]
    X = small_ds.X()
    assert np.array_equal(again.predict(X), model.predict(X))


def test_model_format_and_algo_checked(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"model_format": 99, "algo": "rf"}))
    with pytest.raises(ValueError, match="model format"):
        read_model(path)
    path.write_text(json.dumps({"model_format": MODEL_FORMAT, "algo": "svm"}))
    with pytest.raises(ValueError, match="algo"):
        read_model(path)


# -- provenance and hashing -----------------------------------------------------------------


def test_provenance_bytes_stable_across_runs(tmp_path):
    doc = {"seed": 3, "inputs": {"sequences.csv": "abc"}, "tool_version": "0.1.0"}
    p1 = write_provenance(tmp_path / "run1", "train", doc)
    p2 = write_provenance(tmp_path / "run2", "train", doc)
    assert p1.read_bytes() == p2.read_bytes()
    body = json.loads(p1.read_text())
    assert body["command"] == "train"
    assert body["seed"] == 3
    assert "time" not in json.dumps(body).lower()
    assert (tmp_path / "run1" / "provenance-train.timestamp").exists()


def test_sha256_file_tracks_content(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("identical\n")
    b.write_text("identical\n")
    assert sha256_file(a) == sha256_file(b)
    b.write_text("different\n")
    assert sha256_file(a) != sha256_file(b)
