import logging
import math

import numpy as np
import pytest

from wayfind.mapping import (
    ControlPointPair,
    DecisionSequence,
    FloorTransform,
    MappingConfig,
    MappingError,
    Trajectory,
    assign_level,
    assign_levels,
    estimate_floor_transforms,
    estimate_transform,
    extract_decision_sequence,
    infer_z_ranges,
    map_point,
    snap_to_node,
)
from wayfind.network import build_network


def corridor_net():
    nodes = [
        {"id": "402", "level": 4, "kind": "room_access", "x": 0.0, "y": 0.0},
        {"id": "404", "level": 4, "kind": "room_access", "x": 10.0, "y": 0.0},
        {"id": "406", "level": 4, "kind": "room_access", "x": 20.0, "y": 0.0},
    ]
    links = [
        {"a": "402", "b": "404", "kind": "same_level"},
        {"a": "404", "b": "406", "kind": "same_level"},
    ]
    return build_network({"format": 1, "levels": [4], "nodes": nodes, "links": links})


def pairs_from_transform(tf, virtual_xy, z):
    """Forward-construct control point pairs from known parameters."""
    out = []
    for vx, vy in virtual_xy:
        mx, my = tf.apply(np.array([vx, vy]))
        out.append(ControlPointPair(tf.level, (vx, vy, z), (float(mx), float(my))))
    return out


# -- transform estimation -------------------------------------------------------


def test_identity_pairs_give_identity_transform():
    pts = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (10.0, 10.0)]
    pairs = [ControlPointPair(1, (x, y, 0.0), (x, y)) for x, y in pts]
    tf = estimate_transform(pairs, 1)
    assert tf.scale == pytest.approx(1.0, abs=1e-12)
    assert tf.rotation == pytest.approx(0.0, abs=1e-12)
    assert tf.tx == pytest.approx(0.0, abs=1e-12)
    assert tf.ty == pytest.approx(0.0, abs=1e-12)


def test_pure_translation_recovered():
    # virtual = map shifted by (+10, +5), so the transform subtracts it
    pts = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
    pairs = [ControlPointPair(1, (x + 10.0, y + 5.0, 0.0), (x, y)) for x, y in pts]
    tf = estimate_transform(pairs, 1)
    assert tf.scale == pytest.approx(1.0, abs=1e-9)
    assert tf.rotation == pytest.approx(0.0, abs=1e-9)
    assert tf.tx == pytest.approx(-10.0, abs=1e-9)
    assert tf.ty == pytest.approx(-5.0, abs=1e-9)


def test_quarter_turn_double_scale_recovered_from_corners():
    true = FloorTransform(1, scale=2.0, rotation=math.pi / 2, tx=3.0, ty=-4.0)
    corners = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]
    tf = estimate_transform(pairs_from_transform(true, corners, 0.0), 1)
    assert tf.scale == pytest.approx(2.0, abs=1e-9)
    assert tf.rotation == pytest.approx(math.pi / 2, abs=1e-9)
    assert tf.tx == pytest.approx(3.0, abs=1e-9)
    assert tf.ty == pytest.approx(-4.0, abs=1e-9)


def test_random_transform_recovery_and_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(100):
        true = FloorTransform(
            1,
            scale=float(rng.uniform(0.5, 3.0)),
            rotation=float(rng.uniform(0.0, 2.0 * math.pi)),
            tx=float(rng.uniform(-50, 50)),
            ty=float(rng.uniform(-50, 50)),
        )
        n_pts = int(rng.integers(3, 8))
        virtual = [tuple(v) for v in rng.uniform(-30, 30, size=(n_pts, 2))]
        if np.linalg.matrix_rank(np.array(virtual) - np.array(virtual[0])) < 1:
            continue
        tf = estimate_transform(pairs_from_transform(true, virtual, 0.0), 1)
        assert abs(tf.scale - true.scale) <= 1e-9
        rot_err = (tf.rotation - true.rotation + math.pi) % (2 * math.pi) - math.pi
        assert abs(rot_err) <= 1e-9
        assert abs(tf.tx - true.tx) <= 1e-9 and abs(tf.ty - true.ty) <= 1e-9
        probe = rng.uniform(-40, 40, size=(5, 2))
        assert np.allclose(tf.invert(tf.apply(probe)), probe, atol=1e-6)


def test_transform_residual_reported_for_noisy_pairs():
    true = FloorTransform(1, scale=1.5, rotation=0.3, tx=1.0, ty=2.0)
    rng = np.random.default_rng(0)
    virtual = rng.uniform(0, 20, size=(6, 2))
    pairs = []
    for vx, vy in virtual:
        mx, my = true.apply(np.array([vx, vy])) + rng.normal(0, 0.05, size=2)
        pairs.append(ControlPointPair(1, (vx, vy, 0.0), (float(mx), float(my))))
    tf = estimate_transform(pairs, 1)
    assert 0.0 < tf.rms_residual < 0.5


def test_estimate_transform_needs_two_distinct_pairs():
    with pytest.raises(MappingError):
        estimate_transform([ControlPointPair(1, (0, 0, 0), (0, 0))], 1)
    coincident = [ControlPointPair(1, (5.0, 5.0, 0.0), (1.0, 2.0)) for _ in range(4)]
    with pytest.raises(MappingError):
        estimate_transform(coincident, 1)


def test_scale_must_be_positive():
    with pytest.raises(MappingError):
        FloorTransform(1, scale=0.0, rotation=0.0, tx=0.0, ty=0.0)


# -- vertical assignment ----------------------------------------------------------


def test_infer_z_ranges_midpoints_and_padding():
    ranges = infer_z_ranges({1: [0.0], 2: [3.0], 3: [6.0]})
    assert ranges[1] == pytest.approx((-1.5, 1.5))
    assert ranges[2] == pytest.approx((1.5, 4.5))
    assert ranges[3] == pytest.approx((4.5, 7.5))


def test_infer_z_ranges_single_level_unbounded():
    ranges = infer_z_ranges({1: [2.0]})
    lo, hi = ranges[1]
    assert lo < 2.0 < hi


def test_assign_level_half_open_boundaries():
    tfs = [
        FloorTransform(1, 1.0, 0.0, 0.0, 0.0, z_min=-1.5, z_max=1.5),
        FloorTransform(2, 1.0, 0.0, 0.0, 0.0, z_min=1.5, z_max=4.5),
    ]
    assert assign_level(0.0, tfs) == 1
    assert assign_level(1.5, tfs) == 2  # boundary belongs to the upper interval
    assert assign_level(4.4999, tfs) == 2
    with pytest.raises(MappingError):
        assign_level(4.5, tfs)
    with pytest.raises(MappingError):
        assign_level(-2.0, tfs)


def test_assign_levels_vectorized_matches_scalar():
    tfs = [
        FloorTransform(1, 1.0, 0.0, 0.0, 0.0, z_min=0.0, z_max=3.0),
        FloorTransform(2, 1.0, 0.0, 0.0, 0.0, z_min=3.0, z_max=6.0),
    ]
    zs = np.array([0.0, 1.0, 2.9999, 3.0, 5.0, 6.0, -0.1])
    levels, valid = assign_levels(zs, tfs)
    assert list(valid) == [True, True, True, True, True, False, False]
    assert list(levels[valid]) == [1, 1, 1, 2, 2]


def test_map_point_applies_level_transform():
    tf = FloorTransform(1, scale=2.0, rotation=0.0, tx=1.0, ty=1.0, z_min=0.0, z_max=3.0)
    xy, level = map_point((3.0, 4.0, 1.0), [tf])
    assert level == 1
    assert xy == pytest.approx((7.0, 9.0))
    with pytest.raises(MappingError):
        map_point((3.0, 4.0, 5.0), [tf])


# -- snapping ---------------------------------------------------------------------


def test_snap_exact_hit_and_miss():
    net = corridor_net()
    cfg = MappingConfig(snap_radius=2.0)
    assert snap_to_node((0.0, 0.0), 4, net, cfg) == "402"
    assert snap_to_node((0.0, 1.9), 4, net, cfg) == "402"
    assert snap_to_node((5.0, 0.0), 4, net, cfg) is None
    assert snap_to_node((0.0, 0.0), 3, net, cfg) is None  # wrong level


def test_snap_tie_prefers_lexicographically_smaller_id():
    net = corridor_net()
    cfg = MappingConfig(snap_radius=6.0)
    assert snap_to_node((5.0, 0.0), 4, net, cfg) == "402"  # equidistant to 402/404


# -- trajectory containers ----------------------------------------------------------


def test_trajectory_validation():
    t = Trajectory("p1", 1, t_ms=np.array([0, 10]), pos=np.zeros((2, 3)))
    assert len(t) == 2
    assert t.head.shape == (2, 3) and t.gaze.shape == (2, 3)
    with pytest.raises(ValueError):
        Trajectory("p1", 5, t_ms=np.array([0]), pos=np.zeros((1, 3)))
    with pytest.raises(ValueError):
        Trajectory("p1", 1, t_ms=np.array([10, 0]), pos=np.zeros((2, 3)))
    with pytest.raises(ValueError):
        Trajectory("p1", 1, t_ms=np.array([0]), pos=np.zeros((1, 2)))
    with pytest.raises(ValueError):
        Trajectory("p1", 1, t_ms=np.array([], dtype=int), pos=np.zeros((0, 3)))


def test_decision_sequence_rejects_consecutive_duplicates():
    with pytest.raises(ValueError):
        DecisionSequence("p1", 1, ("402", "402"))
    seq = DecisionSequence("p1", 1, ("402", "404", "402"))
    assert len(seq) == 3  # revisits after leaving are legitimate


# -- sequence extraction ------------------------------------------------------------


def identity_tf(level=4, z_min=-1.0, z_max=1.0):
    return FloorTransform(level, 1.0, 0.0, 0.0, 0.0, z_min=z_min, z_max=z_max)


def still_trajectory(n=100):
    pos = np.tile([0.0, 0.0, 0.0], (n, 1))
    return Trajectory("p1", 1, t_ms=np.arange(n) * 10, pos=pos)


def test_still_agent_yields_single_node():
    seq = extract_decision_sequence(still_trajectory(), corridor_net(), [identity_tf()])
    assert seq.nodes == ("402",)
    assert seq.participant == "p1" and seq.task == 1


def test_corridor_pass_through_yields_exact_sequence():
    xs = np.linspace(0.0, 20.0, 201)
    pos = np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)])
    traj = Trajectory("p1", 2, t_ms=np.arange(len(xs)) * 10, pos=pos)
    seq = extract_decision_sequence(traj, corridor_net(), [identity_tf()])
    assert seq.nodes == ("402", "404", "406")


def test_far_away_trajectory_yields_empty_sequence_with_warning(caplog):
    pos = np.tile([0.0, 50.0, 0.0], (5, 1))
    traj = Trajectory("p1", 1, t_ms=np.arange(5) * 10, pos=pos)
    with caplog.at_level(logging.WARNING, logger="wayfind.mapping"):
        seq = extract_decision_sequence(traj, corridor_net(), [identity_tf()])
    assert seq.nodes == ()
    assert any("zero decision points" in r.message for r in caplog.records)


def test_nonadjacent_consecutive_pair_warns(caplog):
    # jump straight from 402 to 406, skipping the 404 catchment
    pos = np.array([[0.0, 0.0, 0.0], [20.0, 0.0, 0.0]])
    traj = Trajectory("p1", 1, t_ms=np.array([0, 10]), pos=pos)
    with caplog.at_level(logging.WARNING, logger="wayfind.mapping"):
        seq = extract_decision_sequence(traj, corridor_net(), [identity_tf()])
    assert seq.nodes == ("402", "406")
    assert any("not linked" in r.message for r in caplog.records)
    caplog.clear()
    cfg = MappingConfig(snap_radius=2.0, warn_on_nonadjacent=False)
    with caplog.at_level(logging.WARNING, logger="wayfind.mapping"):
        extract_decision_sequence(traj, corridor_net(), [identity_tf()], cfg)
    assert not any("not linked" in r.message for r in caplog.records)


def test_extraction_is_idempotent_over_replay():
    # replay an extracted sequence as a trajectory through node positions
    net = corridor_net()
    xs = np.linspace(0.0, 20.0, 201)
    pos = np.column_stack([xs, np.zeros_like(xs), np.zeros_like(xs)])
    traj = Trajectory("p1", 1, t_ms=np.arange(len(xs)) * 10, pos=pos)
    seq = extract_decision_sequence(traj, net, [identity_tf()])
    replay_pos = np.array([[net.node(n).x, net.node(n).y, 0.0] for n in seq.nodes])
    replay = Trajectory("p1", 1, t_ms=np.arange(len(seq)) * 10, pos=replay_pos)
    again = extract_decision_sequence(replay, net, [identity_tf()])
    assert again.nodes == seq.nodes


def test_between_floor_samples_are_dropped():
    net = corridor_net()
    tf = identity_tf(z_min=-1.0, z_max=1.0)
    pos = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 5.0], [20.0, 0.0, 0.0]])
    traj = Trajectory("p1", 1, t_ms=np.array([0, 10, 20]), pos=pos)
    seq = extract_decision_sequence(traj, net, [tf], MappingConfig(warn_on_nonadjacent=False))
    assert seq.nodes == ("402", "406")  # the z=5 sample maps to no level


def test_estimate_floor_transforms_groups_by_level():
    true1 = FloorTransform(1, 1.2, 0.1, 3.0, 4.0)
    true2 = FloorTransform(2, 1.4, -0.2, -1.0, 2.0)
    corners = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]
    pairs = pairs_from_transform(true1, corners, 1.0) + pairs_from_transform(true2, corners, 4.0)
    tfs = estimate_floor_transforms(pairs)
    assert [tf.level for tf in tfs] == [1, 2]
    assert tfs[0].scale == pytest.approx(1.2, abs=1e-9)
    assert tfs[1].scale == pytest.approx(1.4, abs=1e-9)
    assert tfs[0].contains_z(1.0) and tfs[1].contains_z(4.0)
    assert not tfs[0].contains_z(4.0)
