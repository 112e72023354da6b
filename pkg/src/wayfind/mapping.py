"""Mapping raw virtual-environment trajectories onto the building network.

Three steps: estimate a per-level 2-D similarity transform from control
point pairs, convert trajectory samples into the map frame (vertical
assignment via per-level z intervals), and snap mapped points to nearby
decision points to obtain an ordered visit sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .network import IndoorNetwork

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12


class MappingError(ValueError):
    """Raised when coordinates cannot be mapped onto the network."""


@dataclass(frozen=True)
class ControlPointPair:
    """One surveyed correspondence between the virtual frame and the map frame."""

    level: int
    virtual: tuple[float, float, float]
    map_xy: tuple[float, float]


@dataclass(frozen=True)
class FloorTransform:
    """Planar similarity transform (virtual -> map) plus the level's z interval.

    map = scale * R(rotation) @ virtual_xy + (tx, ty); a virtual z belongs to
    this level iff z_min <= z < z_max.
    """

    level: int
    scale: float
    rotation: float
    tx: float
    ty: float
    z_min: float = -math.inf
    z_max: float = math.inf
    rms_residual: float = 0.0

    def __post_init__(self):
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise MappingError(f"scale must be positive and finite, got {self.scale}")
        if not self.z_min < self.z_max:
            raise MappingError(f"empty z interval [{self.z_min}, {self.z_max})")

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy @ self.matrix().T + np.array([self.tx, self.ty])

    def invert(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (xy - np.array([self.tx, self.ty])) @ np.linalg.inv(self.matrix()).T

    def contains_z(self, z: float) -> bool:
        return self.z_min <= z < self.z_max

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "scale": self.scale,
            "rotation": self.rotation,
            "tx": self.tx,
            "ty": self.ty,
            "z_min": self.z_min,
            "z_max": self.z_max,
            "rms_residual": self.rms_residual,
        }

    @staticmethod
    def from_dict(d: dict) -> "FloorTransform":
        return FloorTransform(
            level=int(d["level"]),
            scale=float(d["scale"]),
            rotation=float(d["rotation"]),
            tx=float(d["tx"]),
            ty=float(d["ty"]),
            z_min=float(d.get("z_min", -math.inf)),
            z_max=float(d.get("z_max", math.inf)),
            rms_residual=float(d.get("rms_residual", 0.0)),
        )


@dataclass(frozen=True)
class MappingConfig:
    snap_radius: float = 2.0
    warn_on_nonadjacent: bool = True

    def __post_init__(self):
        if self.snap_radius <= 0:
            raise ValueError("snap_radius must be positive")


@dataclass
class Trajectory:
    """Raw positional track of one participant performing one task.

    Samples are stored columnar: pos is (n, 3) virtual coordinates, head is
    (n, 3) yaw/roll/pitch degrees, gaze is (n, 3) virtual coordinates.
    """

    participant: str
    task: int
    t_ms: np.ndarray
    pos: np.ndarray
    head: np.ndarray = field(default=None)  # type: ignore[assignment]
    gaze: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.t_ms = np.asarray(self.t_ms, dtype=np.int64)
        self.pos = np.asarray(self.pos, dtype=float)
        n = len(self.t_ms)
        if n == 0:
            raise ValueError("trajectory is empty")
        if self.task not in (1, 2, 3, 4):
            raise ValueError(f"task must be 1..4, got {self.task}")
        if self.pos.shape != (n, 3):
            raise ValueError("pos must be (n, 3)")
        if np.any(np.diff(self.t_ms) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if self.head is None:
            self.head = np.zeros((n, 3))
        if self.gaze is None:
            self.gaze = np.zeros((n, 3))
        self.head = np.asarray(self.head, dtype=float)
        self.gaze = np.asarray(self.gaze, dtype=float)

    def __len__(self) -> int:
        return len(self.t_ms)


@dataclass(frozen=True)
class DecisionSequence:
    """Ordered decision-point visits of one participant-task."""

    participant: str
    task: int
    nodes: tuple[str, ...]

    def __post_init__(self):
        for a, b in zip(self.nodes, self.nodes[1:]):
            if a == b:
                raise ValueError(f"consecutive duplicate node {a!r} in sequence")

    def __len__(self) -> int:
        return len(self.nodes)


# -- transform estimation ------------------------------------------------------


def estimate_transform(
    pairs: Sequence[ControlPointPair],
    level: int,
    z_range: tuple[float, float] | None = None,
) -> FloorTransform:
    """Least-squares similarity transform for one level.

    Solves for (scale, rotation, translation) minimizing squared map-frame
    residuals over the level's control point pairs. Needs at least two
    pairs with non-coincident virtual positions.
    """
    selected = [p for p in pairs if p.level == level]
    if len(selected) < 2:
        raise MappingError(f"level {level}: need at least 2 control point pairs, got {len(selected)}")
    v = np.array([p.virtual[:2] for p in selected], dtype=float)
    m = np.array([p.map_xy for p in selected], dtype=float)

    n = len(selected)
    # Linear system in (a, b, tx, ty) with a = s*cos(r), b = s*sin(r):
    #   mx = a*vx - b*vy + tx;  my = b*vx + a*vy + ty
    A = np.zeros((2 * n, 4))
    A[0::2, 0] = v[:, 0]
    A[0::2, 1] = -v[:, 1]
    A[0::2, 2] = 1.0
    A[1::2, 0] = v[:, 1]
    A[1::2, 1] = v[:, 0]
    A[1::2, 3] = 1.0
    rhs = m.reshape(-1)
    sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < 4:
        raise MappingError(f"level {level}: control points are degenerate (coincident virtual positions)")
    a, b, tx, ty = sol
    scale = math.hypot(a, b)
    if scale <= 0:
        raise MappingError(f"level {level}: degenerate transform with zero scale")
    rotation = math.atan2(b, a)

    if z_range is None:
        # single-level estimates accept any z unless an interval is supplied
        z_range = (-math.inf, math.inf)

    tf = FloorTransform(level=level, scale=scale, rotation=rotation, tx=tx, ty=ty,
                        z_min=z_range[0], z_max=z_range[1])
    residuals = tf.apply(v) - m
    rms = float(np.sqrt(np.mean(np.sum(residuals**2, axis=1))))
    return FloorTransform(**{**tf.as_dict(), "rms_residual": rms})


def infer_z_ranges(level_heights: dict[int, Sequence[float]]) -> dict[int, tuple[float, float]]:
    """Half-open z intervals per level, split midway between floor heights.

    The outermost levels are padded by half the median inter-level gap so a
    floor's own walking plane always lies strictly inside its interval.
    """
    levels = sorted(level_heights)
    means = {lv: float(np.mean(level_heights[lv])) for lv in levels}
    if len(levels) == 1:
        return {levels[0]: (-math.inf, math.inf)}
    ordered = sorted(levels, key=lambda lv: means[lv])
    gaps = [means[b] - means[a] for a, b in zip(ordered, ordered[1:])]
    pad = float(np.median(gaps)) / 2.0
    ranges: dict[int, tuple[float, float]] = {}
    for i, lv in enumerate(ordered):
        lo = means[lv] - pad if i == 0 else (means[ordered[i - 1]] + means[lv]) / 2.0
        hi = means[lv] + pad if i == len(ordered) - 1 else (means[lv] + means[ordered[i + 1]]) / 2.0
        ranges[lv] = (lo, hi)
    return ranges


def estimate_floor_transforms(pairs: Sequence[ControlPointPair]) -> list[FloorTransform]:
    """Per-level transforms for every level present, with inferred z intervals."""
    levels = sorted({p.level for p in pairs})
    if not levels:
        raise MappingError("no control point pairs given")
    heights = {lv: [p.virtual[2] for p in pairs if p.level == lv] for lv in levels}
    ranges = infer_z_ranges(heights)
    return [estimate_transform(pairs, lv, z_range=ranges[lv]) for lv in levels]


# -- point mapping ---------------------------------------------------------------


def assign_level(z: float, transforms: Sequence[FloorTransform]) -> int:
    """Level whose half-open z interval contains z."""
    for tf in transforms:
        if tf.contains_z(z):
            return tf.level
    raise MappingError(f"z={z} outside every level's z interval")


def assign_levels(zs: np.ndarray, transforms: Sequence[FloorTransform]) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized level assignment; returns (levels, valid_mask)."""
    zs = np.asarray(zs, dtype=float)
    levels = np.full(zs.shape, -(10**9), dtype=np.int64)
    valid = np.zeros(zs.shape, dtype=bool)
    for tf in transforms:
        mask = (zs >= tf.z_min) & (zs < tf.z_max) & ~valid
        levels[mask] = tf.level
        valid |= mask
    return levels, valid


def map_point(
    p: tuple[float, float, float], transforms: Sequence[FloorTransform]
) -> tuple[tuple[float, float], int]:
    """Map a virtual (x, y, z) point to (map xy, level)."""
    level = assign_level(p[2], transforms)
    tf = next(t for t in transforms if t.level == level)
    xy = tf.apply(np.array(p[:2]))
    return (float(xy[0]), float(xy[1])), level


def snap_to_node(
    p: tuple[float, float],
    level: int,
    net: IndoorNetwork,
    cfg: MappingConfig = MappingConfig(),
) -> str | None:
    """Nearest same-level node within the snap radius, or None.

    Distance ties within 1e-12 go to the lexicographically smallest id.
    """
    best_d = math.inf
    best_id: str | None = None
    for node in net.nodes_on_level(level):
        d = math.hypot(node.x - p[0], node.y - p[1])
        if d < best_d - TIE_TOLERANCE or (abs(d - best_d) <= TIE_TOLERANCE and (best_id is None or node.id < best_id)):
            best_d, best_id = d, node.id
    if best_id is None or best_d > cfg.snap_radius:
        return None
    return best_id


class _LevelIndex:
    """KD-tree over one level's node positions, for bulk snapping."""

    def __init__(self, net: IndoorNetwork, level: int):
        nodes = sorted(net.nodes_on_level(level), key=lambda n: n.id)
        self.ids = [n.id for n in nodes]
        self.points = np.array([[n.x, n.y] for n in nodes]) if nodes else np.zeros((0, 2))
        self.tree = cKDTree(self.points) if nodes else None

    def snap_codes(self, pts: np.ndarray, radius: float) -> np.ndarray:
        """Index of the snapped node per point, -1 where nothing is in range."""
        if self.tree is None or len(pts) == 0:
            return np.full(len(pts), -1, dtype=np.int64)
        k = min(2, len(self.ids))
        dist, idx = self.tree.query(pts, k=k, distance_upper_bound=radius + 1.0)
        if k == 1:
            dist = dist[:, None]
            idx = idx[:, None]
        out = np.where(dist[:, 0] <= radius, idx[:, 0], -1).astype(np.int64)
        if k > 1:
            with np.errstate(invalid="ignore"):
                # inf - inf on double misses is nan, which correctly fails the tie test
                ties = np.nonzero((out >= 0) & (dist[:, 1] - dist[:, 0] <= TIE_TOLERANCE))[0]
            for row in ties:
                # rare exact tie: full scan with the lexicographic rule
                d_all = np.hypot(self.points[:, 0] - pts[row, 0], self.points[:, 1] - pts[row, 1])
                tied = np.nonzero(d_all <= d_all.min() + TIE_TOLERANCE)[0]
                out[row] = min(tied, key=lambda i: self.ids[i])
        return out


def extract_decision_sequence(
    traj: Trajectory,
    net: IndoorNetwork,
    transforms: Sequence[FloorTransform],
    cfg: MappingConfig = MappingConfig(),
) -> DecisionSequence:
    """Snap every sample, drop misses, and collapse consecutive duplicates.

    Samples whose z falls outside every level interval are dropped, as are
    samples farther than the snap radius from every same-level node. An
    empty result is returned (with a warning) rather than raised.
    """
    levels, valid = assign_levels(traj.pos[:, 2], transforms)
    tf_by_level = {tf.level: tf for tf in transforms}

    code = np.full(len(traj), -1, dtype=np.int64)
    id_table: list[str] = []
    for level in np.unique(levels[valid]):
        mask = valid & (levels == level)
        map_xy = tf_by_level[int(level)].apply(traj.pos[mask, :2])
        index = _LevelIndex(net, int(level))
        local = index.snap_codes(map_xy, cfg.snap_radius)
        rows = np.nonzero(mask)[0]
        hit = local >= 0
        code[rows[hit]] = local[hit] + len(id_table)
        id_table.extend(index.ids)

    picked = code[code >= 0]
    visited: list[str] = []
    if len(picked):
        keep = np.concatenate([[True], picked[1:] != picked[:-1]])
        visited = [id_table[c] for c in picked[keep]]

    if not visited:
        logger.warning(
            "trajectory %s/task %d mapped to zero decision points", traj.participant, traj.task
        )
    if cfg.warn_on_nonadjacent:
        for a, b in zip(visited, visited[1:]):
            if b not in net._adjacency.get(a, ()):
                logger.warning(
                    "trajectory %s/task %d: consecutive nodes %s -> %s are not linked",
                    traj.participant, traj.task, a, b,
                )
    return DecisionSequence(traj.participant, traj.task, tuple(visited))
