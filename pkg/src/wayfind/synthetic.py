"""Synthetic building, agents, and trajectories with known ground truth.

Builds a multi-story test building to a node budget, walks simulated
agents through the four route tasks with a 1-step Markov policy, and
renders each walk into a raw virtual-frame trajectory (interpolated,
sampled, optionally noised) so the whole mapping and learning pipeline
can run end to end without any real recordings.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .dataset import PROFILE_VOCABULARIES, PersonProfile
from .mapping import (
    ControlPointPair,
    DecisionSequence,
    FloorTransform,
    Trajectory,
    assign_levels,
    infer_z_ranges,
)
from .network import (
    STAIR_LETTERS,
    IndoorNetwork,
    Link,
    LinkKind,
    Node,
    NodeKind,
    hop_distances,
)

logger = logging.getLogger(__name__)

ANY_EXIT = "any-exit"

# label suffixes run 1..99 (odd corridor) and 2..98 (even corridor)
_MAX_ODD = 50
_MAX_EVEN = 49


@dataclass(frozen=True)
class BuildingSpec:
    """Parametric multi-story building with two parallel corridors per floor.

    The default instantiation realizes the reference layout: 4 levels,
    214 m x 12 m floors, 5 stair shafts, 8 ground exits, 133 nodes total.
    nodes_per_corridor, when set, overrides the total node budget with a
    uniform per-corridor count.
    """

    n_levels: int = 4
    corridor_length_m: float = 214.0
    corridor_width_m: float = 12.0
    n_stair_shafts: int = 5
    n_exits: int = 8
    n_nodes_total: int = 133
    nodes_per_corridor: int | None = None
    cross_link_every: int = 4


def _corridor_budget(spec: BuildingSpec) -> list[int]:
    """Corridor node count per level, top levels absorbing the remainder."""
    n_stairs = spec.n_stair_shafts * spec.n_levels
    if spec.nodes_per_corridor is not None:
        if not 2 <= spec.nodes_per_corridor <= _MAX_EVEN:
            raise ValueError(f"nodes_per_corridor must be 2..{_MAX_EVEN}")
        return [2 * spec.nodes_per_corridor] * spec.n_levels
    budget = spec.n_nodes_total - n_stairs - spec.n_exits
    lo = 4 * spec.n_levels + n_stairs + spec.n_exits
    hi = (_MAX_ODD + _MAX_EVEN) * spec.n_levels + n_stairs + spec.n_exits
    if budget < 4 * spec.n_levels or budget > (_MAX_ODD + _MAX_EVEN) * spec.n_levels:
        raise ValueError(
            f"cannot realize n_nodes_total={spec.n_nodes_total}: achievable range is {lo}..{hi}"
        )
    base, extra = divmod(budget, spec.n_levels)
    return [base + (1 if spec.n_levels - lv < extra else 0) for lv in range(1, spec.n_levels + 1)]


def _nearest_odd(x: float) -> int:
    return 2 * round((x - 1) / 2) + 1


def _nearest_even(x: float) -> int:
    return 2 * round(x / 2)


def _corridor_suffixes(k: int, parity: str) -> list[int]:
    """k label suffixes spread over 1..99 (odd) or 2..98 (even)."""
    if parity == "odd":
        lo, span, snap = 1, 98, _nearest_odd
    else:
        lo, span, snap = 2, 96, _nearest_even
    if k == 1:
        return [lo]
    return [snap(lo + span * i / (k - 1)) for i in range(k)]


def build_building(spec: BuildingSpec = BuildingSpec()) -> IndoorNetwork:
    """Construct the parametric building network.

    Per floor: two corridors along x (odd-numbered rooms on one side, even
    on the other), cross links at the ends and every few positions, stair
    shafts along one long side. Ground floor adds exits on that same side:
    one near each of the last shafts' bases plus free-standing ones spread
    between shafts, so exit placement is asymmetric. Same-level node
    spacing stays >= 8 m, which keeps 2 m snap catchments well separated.
    """
    if spec.n_levels < 1:
        raise ValueError("need at least one level")
    if spec.n_levels > 9:
        raise ValueError("levels above 9 break the leading-digit label convention")
    if not 1 <= spec.n_stair_shafts <= len(STAIR_LETTERS):
        raise ValueError(f"n_stair_shafts must be 1..{len(STAIR_LETTERS)}")
    if spec.n_exits < 1:
        raise ValueError("need at least one exit")
    if spec.cross_link_every < 1:
        raise ValueError("cross_link_every must be >= 1")

    stair_exit_count = min(spec.n_exits, spec.n_stair_shafts - 1)
    spread_count = spec.n_exits - stair_exit_count
    if spread_count > spec.n_stair_shafts:
        raise ValueError(
            f"cannot realize n_exits={spec.n_exits}: at most "
            f"{2 * spec.n_stair_shafts - 1} exits fit this layout"
        )

    L = spec.corridor_length_m
    y_odd = spec.corridor_width_m / 6.0
    y_even = 5.0 * spec.corridor_width_m / 6.0
    y_south = -spec.corridor_width_m / 2.0
    levels = list(range(1, spec.n_levels + 1))

    nodes: dict[str, Node] = {}
    links: list[Link] = []
    kind_override: dict[str, NodeKind] = {}

    def add_corridor(level: int, suffixes: list[int], parity: str) -> list[str]:
        y = y_odd if parity == "odd" else y_even
        ref = 1 if parity == "odd" else 2
        span = 98 if parity == "odd" else 96
        ids = []
        for s in suffixes:
            nid = f"{level}{s:02d}"
            nodes[nid] = Node(nid, level, NodeKind.ROOM_ACCESS, L * (s - ref) / span, y)
            ids.append(nid)
        for a, b in zip(ids, ids[1:]):
            links.append(Link.make(a, b, LinkKind.SAME_LEVEL))
        return ids

    per_level = _corridor_budget(spec)
    odd_ids: dict[int, list[str]] = {}
    even_ids: dict[int, list[str]] = {}
    for level, count in zip(levels, per_level):
        odd_k = (count + 1) // 2
        even_k = count - odd_k
        odd_ids[level] = add_corridor(level, _corridor_suffixes(odd_k, "odd"), "odd")
        even_ids[level] = add_corridor(level, _corridor_suffixes(even_k, "even"), "even")

        # cross corridors at both ends and every cross_link_every-th position
        positions = sorted(set(range(0, odd_k, spec.cross_link_every)) | {odd_k - 1})
        for i in positions:
            a = odd_ids[level][i]
            b = min(even_ids[level], key=lambda e: (abs(nodes[e].x - nodes[a].x), e))
            links.append(Link.make(a, b, LinkKind.SAME_LEVEL))
            kind_override[a] = NodeKind.CORRIDOR_JUNCTION
            kind_override[b] = NodeKind.CORRIDOR_JUNCTION

    shaft_x = [L * (s + 0.5) / spec.n_stair_shafts for s in range(spec.n_stair_shafts)]
    for s, x in enumerate(shaft_x):
        letter = STAIR_LETTERS[s]
        prev = None
        for level in levels:
            nid = f"{letter}{level}"
            nodes[nid] = Node(nid, level, NodeKind.STAIRCASE, x, y_south)
            access = min(odd_ids[level], key=lambda c: (abs(nodes[c].x - x), c))
            links.append(Link.make(nid, access, LinkKind.STAIR_ACCESS))
            kind_override[access] = NodeKind.CORRIDOR_JUNCTION
            if prev is not None:
                links.append(Link.make(prev, nid, LinkKind.STAIR_STAIR))
            prev = nid

    # exits: one 8 m east of each of the last stair shafts' ground bases,
    # the rest spread at inter-shaft midpoints; all on the south side
    exit_x: list[tuple[float, str | None]] = []
    for s in range(spec.n_stair_shafts - stair_exit_count, spec.n_stair_shafts):
        exit_x.append((shaft_x[s] + 8.0, f"{STAIR_LETTERS[s]}1"))
    midpoints = [(prev + x) / 2.0 for prev, x in zip([0.0] + shaft_x, shaft_x)]
    for x in midpoints[:spread_count]:
        exit_x.append((x, None))
    exit_x.sort(key=lambda t: t[0])
    for j, (x, stair) in enumerate(exit_x):
        nid = f"1{j + 1}"
        nodes[nid] = Node(nid, 1, NodeKind.EXIT, x, y_south)
        if stair is not None:
            links.append(Link.make(nid, stair, LinkKind.STAIR_ACCESS))
        else:
            access = min(odd_ids[1], key=lambda c: (abs(nodes[c].x - x), c))
            links.append(Link.make(nid, access, LinkKind.SAME_LEVEL))

    final_nodes = [
        Node(n.id, n.level, kind_override.get(n.id, n.kind), n.x, n.y) for n in nodes.values()
    ]
    return IndoorNetwork(final_nodes, links, levels)


# -- route tasks ---------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    origin: str
    destination: str  # node id, or ANY_EXIT for the evacuation task

    def __post_init__(self):
        if self.task_id not in (1, 2, 3, 4):
            raise ValueError("task_id must be 1..4")
        if (self.task_id == 4) != (self.destination == ANY_EXIT):
            raise ValueError("the evacuation task (4) and destination any-exit imply each other")


def _corridor_by_suffix(net: IndoorNetwork, level: int, parity: int) -> list[tuple[int, str]]:
    out = []
    for n in net.nodes_on_level(level):
        if n.kind in (NodeKind.CORRIDOR_JUNCTION, NodeKind.ROOM_ACCESS) and n.id.isdigit():
            suffix = int(n.id) % 100
            if suffix % 2 == parity:
                out.append((suffix, n.id))
    return sorted(out)


def _nearest_suffix(pairs: list[tuple[int, str]], target: int) -> str:
    return min(pairs, key=lambda p: (abs(p[0] - target), p[0]))[1]


def default_tasks(net: IndoorNetwork) -> tuple[TaskSpec, ...]:
    """The four route tasks on a generated building.

    Task 1 runs the top floor's odd corridor end to end, task 2 descends
    to the second floor's corridor start, task 3 climbs back up to a room
    about two thirds along the even corridor, task 4 evacuates from there.
    """
    top = max(net.levels)
    lower = 2 if 2 in net.levels else min(net.levels)
    odd_top = _corridor_by_suffix(net, top, 1)
    odd_lower = _corridor_by_suffix(net, lower, 1)
    even_top = _corridor_by_suffix(net, top, 0)
    if not odd_top or not odd_lower or not even_top:
        raise ValueError("network lacks the corridors needed for the default tasks")
    a, b = _nearest_suffix(odd_top, 1), _nearest_suffix(odd_top, 99)
    c = _nearest_suffix(odd_lower, 1)
    d = _nearest_suffix(even_top, 64)
    return (
        TaskSpec(1, a, b),
        TaskSpec(2, b, c),
        TaskSpec(3, c, d),
        TaskSpec(4, d, ANY_EXIT),
    )


# -- agent walks ----------------------------------------------------------------


@dataclass(frozen=True)
class AgentPolicy:
    """1-step Markov walker: mostly greedy descent toward the destination,
    with probability deviation_prob a random neighbor weighted against
    already-visited nodes."""

    deviation_prob: float
    revisit_penalty: float = 1.0
    seed: int = 0
    step_cap: int = 400

    def __post_init__(self):
        if not 0.0 <= self.deviation_prob < 1.0:
            raise ValueError("deviation_prob must be in [0, 1)")
        if self.revisit_penalty < 0:
            raise ValueError("revisit_penalty must be >= 0")
        if self.step_cap < 1:
            raise ValueError("step_cap must be >= 1")


def default_policies(seed: int = 0) -> dict[int, AgentPolicy]:
    """Per-task policies calibrated so mean walk lengths land near the
    reference per-task means (20, 26, 17, 8) and keep their ordering."""
    return {
        1: AgentPolicy(deviation_prob=0.26, seed=seed),
        2: AgentPolicy(deviation_prob=0.33, seed=seed),
        3: AgentPolicy(deviation_prob=0.14, seed=seed),
        4: AgentPolicy(deviation_prob=0.02, seed=seed),
    }


def _walk(
    net: IndoorNetwork,
    origin: str,
    dist: dict[str, int],
    policy: AgentPolicy,
    rng: np.random.Generator,
) -> list[str] | None:
    path = [origin]
    visits = Counter({origin: 1})
    cur = origin
    while dist[cur] != 0:
        if len(path) > policy.step_cap:
            return None
        nbrs = net._adjacency[cur]
        if rng.random() < policy.deviation_prob:
            w = np.array([1.0 / (1.0 + policy.revisit_penalty * visits[v]) for v in nbrs])
            cur = nbrs[rng.choice(len(nbrs), p=w / w.sum())]
        else:
            cur = min(nbrs, key=lambda v: (dist[v], v))
        path.append(cur)
        visits[cur] += 1
    return path


def generate_sequences(
    net: IndoorNetwork,
    tasks: Sequence[TaskSpec],
    policy: AgentPolicy | Mapping[int, AgentPolicy],
    n_agents: int = 70,
) -> list[DecisionSequence]:
    """Ground-truth walks for every (agent, task), deterministic per
    (policy seed, agent, task). Agents that hit the step cap are dropped
    with a warning."""
    policies = policy if isinstance(policy, Mapping) else {t.task_id: policy for t in tasks}
    targets_cache: dict[str, dict[str, int]] = {}
    out = []
    for task in tasks:
        if task.destination == ANY_EXIT:
            targets = [n.id for n in net.nodes_of_kind(NodeKind.EXIT)]
            if not targets:
                raise ValueError("evacuation task on a network without exits")
        else:
            targets = [task.destination]
        key = ",".join(sorted(targets))
        if key not in targets_cache:
            targets_cache[key] = hop_distances(net, targets)
        dist = targets_cache[key]
        if task.origin not in dist:
            raise ValueError(f"task {task.task_id}: no path from {task.origin!r} to its destination")
        pol = policies[task.task_id]
        for agent in range(n_agents):
            rng = np.random.default_rng([pol.seed, agent, task.task_id])
            path = _walk(net, task.origin, dist, pol, rng)
            if path is None:
                logger.warning(
                    "agent %d task %d exceeded the %d-step cap, sequence dropped",
                    agent, task.task_id, pol.step_cap,
                )
                continue
            out.append(DecisionSequence(f"p{agent + 1:03d}", task.task_id, tuple(path)))
    return out


# -- virtual frame and trajectories ---------------------------------------------


def _virtual_level_z(level_index: int) -> float:
    return 1.1 + 3.2 * level_index


def default_virtual_transforms(levels: Iterable[int]) -> list[FloorTransform]:
    """Ground-truth per-level frames (virtual -> map), one distinct
    similarity transform per floor, with inferred z intervals."""
    ordered = sorted(set(levels))
    ranges = infer_z_ranges({lv: [_virtual_level_z(i)] for i, lv in enumerate(ordered)})
    out = []
    for i, lv in enumerate(ordered):
        out.append(
            FloorTransform(
                level=lv,
                scale=1.25 + 0.125 * i,
                rotation=(0.15 + 0.05 * i) * (-1.0 if i % 2 else 1.0),
                tx=40.0 + 7.0 * i,
                ty=-25.0 + 9.0 * i,
                z_min=ranges[lv][0],
                z_max=ranges[lv][1],
            )
        )
    return out


def _mid_z(tf: FloorTransform) -> float:
    if math.isfinite(tf.z_min) and math.isfinite(tf.z_max):
        return (tf.z_min + tf.z_max) / 2.0
    return 0.0


def make_control_points(net: IndoorNetwork, transforms: Sequence[FloorTransform]):
    """Surveyed correspondences at each floor's corners and center.

    The virtual side is produced by inverting the ground-truth transforms,
    so estimating transforms from these pairs recovers them exactly.
    """
    xs = [n.x for n in net.nodes.values()]
    ys = [n.y for n in net.nodes.values()]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    refs = [(x0, y0), (x1, y0), (x0, y1), (x1, y1), ((x0 + x1) / 2.0, (y0 + y1) / 2.0)]
    pairs = []
    for tf in transforms:
        vz = _mid_z(tf)
        for mx, my in refs:
            vx, vy = tf.invert(np.array([mx, my]))
            pairs.append(ControlPointPair(tf.level, (float(vx), float(vy), vz), (mx, my)))
    return pairs


@dataclass(frozen=True)
class SynthConfig:
    n_agents: int = 70
    sample_interval_ms: int = 10
    walk_speed_mps: float = 1.4
    position_noise_m: float = 0.0
    virtual_frame_transform: tuple[FloorTransform, ...] | None = None

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.sample_interval_ms < 1:
            raise ValueError("sample_interval_ms must be >= 1")
        if self.walk_speed_mps <= 0:
            raise ValueError("walk_speed_mps must be positive")
        if self.position_noise_m < 0:
            raise ValueError("position_noise_m must be >= 0")


def _render_trajectory(
    seq: DecisionSequence,
    net: IndoorNetwork,
    transforms: Sequence[FloorTransform],
    cfg: SynthConfig,
    rng: np.random.Generator,
) -> Trajectory:
    tf_by_level = {tf.level: tf for tf in transforms}
    waypoints = np.array(
        [
            (net.node(nid).x, net.node(nid).y, _mid_z(tf_by_level[net.node(nid).level]))
            for nid in seq.nodes
        ]
    )
    seg = np.diff(waypoints, axis=0)
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(seg, axis=1))])
    total = float(cum[-1])
    step = cfg.walk_speed_mps * cfg.sample_interval_ms / 1000.0
    s = np.arange(0.0, total + step / 2.0, step)
    if s[-1] < total:
        s = np.append(s, total)
    s = np.minimum(s, total)

    map_x = np.interp(s, cum, waypoints[:, 0])
    map_y = np.interp(s, cum, waypoints[:, 1])
    vz = np.interp(s, cum, waypoints[:, 2])
    map_xy = np.column_stack([map_x, map_y])
    if cfg.position_noise_m > 0:
        map_xy = map_xy + rng.normal(0.0, cfg.position_noise_m, map_xy.shape)

    levels, valid = assign_levels(vz, transforms)
    virt = np.empty_like(map_xy)
    for lv in np.unique(levels[valid]):
        mask = levels == lv
        virt[mask] = tf_by_level[int(lv)].invert(map_xy[mask])

    pos = np.column_stack([virt, vz])
    n = len(s)
    if n > 1:
        d = np.gradient(pos, axis=0)
    else:
        d = np.zeros((1, 3))
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    forward = np.divide(d, norms, out=np.tile([[1.0, 0.0, 0.0]], (n, 1)), where=norms > 1e-12)
    yaw = np.degrees(np.arctan2(forward[:, 1], forward[:, 0]))
    head = np.column_stack([yaw, np.zeros(n), np.zeros(n)])
    t_ms = np.arange(n, dtype=np.int64) * cfg.sample_interval_ms
    return Trajectory(seq.participant, seq.task, t_ms, pos, head=head, gaze=pos + forward)


def sequences_to_trajectories(
    sequences: Sequence[DecisionSequence],
    net: IndoorNetwork,
    cfg: SynthConfig = SynthConfig(),
    seed: int = 0,
) -> Iterator[Trajectory]:
    """Render walks into sampled virtual-frame trajectories, lazily.

    Positions follow the map-frame polyline through the walk's nodes at
    walk speed, get planar Gaussian noise in the map frame, and are then
    pushed into the virtual frame by the inverse per-level transform.
    """
    transforms = cfg.virtual_frame_transform or tuple(default_virtual_transforms(net.levels))
    for i, seq in enumerate(sequences):
        rng = np.random.default_rng([seed, 7, i])
        yield _render_trajectory(seq, net, transforms, cfg, rng)


# -- participant profiles --------------------------------------------------------

_PROFILE_WEIGHTS = {
    "gender": (0.41, 0.59),
    "education": (0.14, 0.23, 0.50, 0.13),
    "vr_experience": (0.26, 0.47, 0.21, 0.015, 0.045),
    "gaming_experience": (0.13, 0.17, 0.19, 0.20, 0.31),
    "building_familiarity": (0.0, 0.09, 0.13, 0.23, 0.55),
    "evacuation_experience": (0.7, 0.3),
    "device": (0.49, 0.51),
}
# weights follow the vocabulary order in dataset.PROFILE_VOCABULARIES


def generate_profiles(participants: Sequence[str], seed: int = 0) -> dict[str, PersonProfile]:
    """Questionnaire-style profiles with roughly realistic marginals."""
    rng = np.random.default_rng([seed, 101])
    out = {}
    for pid in participants:
        fields = {}
        for name, vocab in PROFILE_VOCABULARIES.items():
            w = _PROFILE_WEIGHTS[name]
            fields[name] = vocab[rng.choice(len(vocab), p=np.array(w) / sum(w))]
        age = float(np.clip(round(rng.normal(28.3, 6.4)), 17, 64))
        height = float(np.clip(round(rng.normal(175.0, 9.0)), 150, 200))
        out[pid] = PersonProfile(age=age, height=height, **fields)
    return out
