"""Encoded classification samples built from decision sequences.

Turns ordered node-visit sequences into fixed-width numeric feature
vectors: the task number, the integer codes of the last `lag` visited
nodes, and optionally a participant-profile suffix. Categorical values
are label encoded (sorted categories get codes 0..n-1); age and height
stay numeric; nothing is normalized.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .mapping import DecisionSequence

START = -1  # feature code for positions before the first node of a sequence


@dataclass(frozen=True)
class LabelEncoder:
    """Bijection between category strings and codes 0..n-1, sorted order."""

    categories: tuple[str, ...]
    _index: dict = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.categories:
            raise ValueError("encoder needs at least one category")
        if list(self.categories) != sorted(set(self.categories)):
            raise ValueError("categories must be sorted and distinct")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.categories)})

    def __len__(self) -> int:
        return len(self.categories)

    @property
    def forward(self) -> dict[str, int]:
        return dict(self._index)

    @property
    def inverse(self) -> dict[int, str]:
        return {i: c for i, c in enumerate(self.categories)}

    def encode(self, category: str) -> int:
        try:
            return self._index[category]
        except KeyError:
            raise ValueError(f"unknown category {category!r}") from None

    def decode(self, code: int) -> str:
        if not 0 <= code < len(self.categories):
            raise ValueError(f"code {code} outside 0..{len(self.categories) - 1}")
        return self.categories[code]


def fit_label_encoder(categories: Iterable[str]) -> LabelEncoder:
    cats = sorted(set(str(c) for c in categories))
    if not cats:
        raise ValueError("cannot fit an encoder on an empty category list")
    return LabelEncoder(tuple(cats))


# -- participant profiles -------------------------------------------------------

# Feature order after the task number and lagged node codes. age and height
# are numeric and pass through unencoded; the rest are label encoded.
PROFILE_FIELDS = (
    "gender",
    "age",
    "height",
    "education",
    "vr_experience",
    "gaming_experience",
    "building_familiarity",
    "evacuation_experience",
    "device",
)

NUMERIC_PROFILE_FIELDS = ("age", "height")

PROFILE_VOCABULARIES: dict[str, tuple[str, ...]] = {
    "gender": ("female", "male"),
    "education": ("high_school", "bachelor", "master", "doctorate"),
    "vr_experience": ("never", "seldom", "sometimes", "often", "very_often"),
    "gaming_experience": ("not_at_all", "a_little", "moderately", "quite_a_bit", "very"),
    "building_familiarity": ("not_at_all", "a_little", "moderately", "quite_a_bit", "very"),
    "evacuation_experience": ("no", "yes"),
    "device": ("desktop", "hmd"),
}


@dataclass(frozen=True)
class PersonProfile:
    gender: str
    age: float
    height: float
    education: str
    vr_experience: str
    gaming_experience: str
    building_familiarity: str
    evacuation_experience: str
    device: str

    def __post_init__(self):
        for name, vocab in PROFILE_VOCABULARIES.items():
            value = getattr(self, name)
            if value not in vocab:
                raise ValueError(f"profile field {name}={value!r} not in {vocab}")
        for name in NUMERIC_PROFILE_FIELDS:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"profile field {name}={value!r} must be a positive number")


def fit_profile_encoders() -> dict[str, LabelEncoder]:
    """Encoders over the fixed questionnaire vocabularies (stable across data)."""
    return {name: fit_label_encoder(vocab) for name, vocab in PROFILE_VOCABULARIES.items()}


# -- samples --------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    features: tuple[float, ...]
    target: int
    participant: str
    task: int


def make_lagged_samples(seq: DecisionSequence, lag: int, node_encoder: LabelEncoder) -> list[Sample]:
    """One sample per visited node after the first.

    Features are [task, code(n_{t-1}), ..., code(n_{t-lag})]; positions
    before the sequence start are padded with the START sentinel, so the
    sample count is the same for every lag.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    codes = [node_encoder.encode(n) for n in seq.nodes]
    samples = []
    for t in range(1, len(codes)):
        feats = [float(seq.task)]
        feats += [float(codes[t - 1 - j]) if t - 1 - j >= 0 else float(START) for j in range(lag)]
        samples.append(Sample(tuple(feats), codes[t], seq.participant, seq.task))
    return samples


def lag_feature_names(lag: int) -> tuple[str, ...]:
    return ("task",) + tuple(f"prev_{j}" for j in range(1, lag + 1))


def attach_profiles(
    samples: Sequence[Sample],
    profiles: Mapping[str, PersonProfile],
    encoders: Mapping[str, LabelEncoder],
) -> list[Sample]:
    """Append the profile feature suffix to every sample, in declared order."""
    out = []
    for s in samples:
        if s.participant not in profiles:
            raise ValueError(f"no profile for participant {s.participant!r}")
        p = profiles[s.participant]
        suffix = []
        for name in PROFILE_FIELDS:
            value = getattr(p, name)
            suffix.append(float(value) if name in NUMERIC_PROFILE_FIELDS else float(encoders[name].encode(value)))
        out.append(replace(s, features=s.features + tuple(suffix)))
    return out


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    node_encoder: LabelEncoder
    feature_names: tuple[str, ...]
    profile_encoders: dict[str, LabelEncoder] | None = None

    def __post_init__(self):
        width = len(self.feature_names)
        for s in self.samples:
            if len(s.features) != width:
                raise ValueError(
                    f"sample of width {len(s.features)} in a dataset declaring {width} features"
                )
            if not 0 <= s.target < len(self.node_encoder):
                raise ValueError(f"target {s.target} not decodable by the node encoder")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_classes(self) -> int:
        return len(self.node_encoder)

    def X(self) -> np.ndarray:
        return np.array([s.features for s in self.samples], dtype=float).reshape(len(self.samples), -1)

    def y(self) -> np.ndarray:
        return np.array([s.target for s in self.samples], dtype=np.int64)


def build_dataset(
    sequences: Sequence[DecisionSequence],
    lag: int = 1,
    node_encoder: LabelEncoder | None = None,
    profiles: Mapping[str, PersonProfile] | None = None,
) -> Dataset:
    """Featurize sequences; fits the node encoder on observed labels unless given."""
    if node_encoder is None:
        labels = {n for seq in sequences for n in seq.nodes}
        node_encoder = fit_label_encoder(labels)
    samples: list[Sample] = []
    for seq in sequences:
        samples.extend(make_lagged_samples(seq, lag, node_encoder))
    names = lag_feature_names(lag)
    profile_encoders = None
    if profiles is not None:
        profile_encoders = fit_profile_encoders()
        samples = attach_profiles(samples, profiles, profile_encoders)
        names = names + PROFILE_FIELDS
    return Dataset(tuple(samples), node_encoder, names, profile_encoders)


def strip_profiles(ds: Dataset) -> Dataset:
    """Drop the profile suffix, keeping only task + lagged node features."""
    keep = sum(1 for n in ds.feature_names if n not in PROFILE_FIELDS)
    samples = tuple(replace(s, features=s.features[:keep]) for s in ds.samples)
    return Dataset(samples, ds.node_encoder, ds.feature_names[:keep], None)


# -- train/test split -----------------------------------------------------------


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


def split_indices(n: int, cfg: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation split; sizes depend only on (n, train_fraction)."""
    if n < 2:
        raise ValueError("need at least 2 samples to split")
    k = round(cfg.train_fraction * n)
    if k == 0 or k == n:
        raise ValueError(f"train_fraction {cfg.train_fraction} leaves an empty partition for n={n}")
    perm = np.random.default_rng(cfg.seed).permutation(n)
    return np.sort(perm[:k]), np.sort(perm[k:])


def split(ds: Dataset, cfg: SplitConfig = SplitConfig()) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(len(ds), cfg)
    pick = lambda idx: Dataset(
        tuple(ds.samples[i] for i in idx), ds.node_encoder, ds.feature_names, ds.profile_encoders
    )
    return pick(train_idx), pick(test_idx)


def dataset_hash(ds: Dataset) -> str:
    """Content digest covering features, targets, ids and encoder tables."""
    h = hashlib.sha256()
    h.update(",".join(ds.feature_names).encode())
    h.update(",".join(ds.node_encoder.categories).encode())
    for s in ds.samples:
        row = ",".join(f"{v:.12g}" for v in s.features)
        h.update(f"{s.participant}|{s.task}|{row}|{s.target}\n".encode())
    return h.hexdigest()
