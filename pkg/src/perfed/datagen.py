"""Synthetic classification tasks and client partitioning.

Tasks are Gaussian mixtures (one cloud per class). Partitioning supports
an IID mode (uniform draws) and a skewed mode where each client majors in
a random subset of classes and draws most of its quota from them. All
draws are without replacement over one shared pool, so client training
sets never overlap; overlap is tracked by positional sample identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, PartitionInfeasibleError

__all__ = [
    "LabeledDataset",
    "MixtureTaskSpec",
    "PartitionPlan",
    "make_mixture_task",
    "partition_iid",
    "partition_noniid",
    "client_test_view",
    "merge_datasets",
    "largest_remainder_apportion",
    "partition_preview_rows",
]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Immutable labeled samples.

    ``ids`` carry positional identity within the source pool (row index at
    pool construction); synthetic or merged-in samples carry -1. Identity
    is what partition disjointness is defined over.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    ids: np.ndarray = None

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if feats.ndim != 2:
            raise ContractError(f"features must be 2-D, got shape {feats.shape}")
        if labels.ndim != 1 or len(labels) != len(feats):
            raise ContractError("labels must be 1-D and aligned with features")
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ContractError(
                f"labels must lie in [0, {self.class_count}), got "
                f"[{labels.min()}, {labels.max()}]"
            )
        if not np.isfinite(feats).all():
            raise ContractError("features contain non-finite values")
        ids = self.ids
        if ids is None:
            ids = np.full(len(labels), -1, dtype=np.int64)
        else:
            ids = np.array(ids, dtype=np.int64, copy=True)
            if ids.shape != labels.shape:
                raise ContractError("ids must align with labels")
        for arr in (feats, labels, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            self.features[idx], self.labels[idx], self.class_count, self.ids[idx]
        )


def merge_datasets(base: LabeledDataset, extra_features, extra_labels) -> LabeledDataset:
    """Append samples to a dataset; the appended samples get identity -1."""
    feats = np.concatenate([base.features, np.asarray(extra_features, dtype=np.float64)])
    labels = np.concatenate([base.labels, np.asarray(extra_labels, dtype=np.int64)])
    ids = np.concatenate([base.ids, np.full(len(labels) - len(base), -1, dtype=np.int64)])
    return LabeledDataset(feats, labels, base.class_count, ids)


@dataclass(frozen=True)
class MixtureTaskSpec:
    """Gaussian mixture task: one isotropic cloud per class.

    ``means`` is (class_count, dim); ``scales`` is a scalar or one value
    per class.
    """

    class_count: int
    dim: int
    means: tuple
    scales: tuple
    train_size: int
    test_size: int

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if means.shape != (self.class_count, self.dim):
            raise ConfigError(
                f"means must have shape ({self.class_count}, {self.dim}), got {means.shape}"
            )
        for a in range(self.class_count):
            for b in range(a + 1, self.class_count):
                if np.array_equal(means[a], means[b]):
                    raise ConfigError(f"duplicate class means for classes {a} and {b}")
        scales = np.broadcast_to(
            np.asarray(self.scales, dtype=np.float64), (self.class_count,)
        ).copy()
        if (scales <= 0).any():
            raise ConfigError("scales must be positive")
        if self.train_size < self.class_count or self.test_size < self.class_count:
            raise ConfigError("train_size and test_size must be >= class_count")
        object.__setattr__(self, "means", tuple(map(tuple, means)))
        object.__setattr__(self, "scales", tuple(scales))


def _balanced_counts(total: int, class_count: int) -> np.ndarray:
    base = total // class_count
    counts = np.full(class_count, base, dtype=np.int64)
    counts[: total % class_count] += 1
    return counts


def _draw_mixture(spec: MixtureTaskSpec, total: int, rng: np.random.Generator) -> LabeledDataset:
    means = np.asarray(spec.means)
    counts = _balanced_counts(total, spec.class_count)
    feats, labels = [], []
    for c in range(spec.class_count):
        feats.append(means[c] + spec.scales[c] * rng.standard_normal((counts[c], spec.dim)))
        labels.append(np.full(counts[c], c, dtype=np.int64))
    return LabeledDataset(
        np.concatenate(feats), np.concatenate(labels), spec.class_count, np.arange(total)
    )


def make_mixture_task(spec: MixtureTaskSpec, seed: int):
    """Draw disjoint train and test pools; balanced per class up to rounding."""
    rng = np.random.default_rng(seed)
    train = _draw_mixture(spec, spec.train_size, rng)
    test = _draw_mixture(spec, spec.test_size, rng)
    return train, test


@dataclass(frozen=True)
class PartitionPlan:
    """How to split a pool across clients.

    In ``noniid`` mode each client gets ``ceil(major_class_fraction * K)``
    randomly chosen major classes and draws ``round(major_sample_fraction
    * per_client_size)`` samples uniformly from them; the rest come
    uniformly from the remaining classes' samples.
    """

    client_count: int
    per_client_size: int
    mode: str
    major_class_fraction: float = None
    major_sample_fraction: float = None
    seed: int = 0

    def __post_init__(self):
        if self.client_count < 1:
            raise ConfigError(f"client_count must be >= 1, got {self.client_count}")
        if self.per_client_size < 1:
            raise ConfigError(f"per_client_size must be >= 1, got {self.per_client_size}")
        if self.mode not in ("iid", "noniid"):
            raise ConfigError(f"mode must be 'iid' or 'noniid', got {self.mode!r}")
        if self.mode == "noniid":
            for name, frac in (
                ("major_class_fraction", self.major_class_fraction),
                ("major_sample_fraction", self.major_sample_fraction),
            ):
                if frac is None or not 0 < frac <= 1:
                    raise ConfigError(f"{name} must lie in (0, 1], got {frac}")


def _check_feasible(pool: LabeledDataset, plan: PartitionPlan):
    need = plan.client_count * plan.per_client_size
    if need > len(pool):
        raise ConfigError(
            f"partition infeasible: {plan.client_count} clients x "
            f"{plan.per_client_size} samples = {need} exceeds pool size {len(pool)}"
        )


def partition_iid(pool: LabeledDataset, plan: PartitionPlan) -> list[LabeledDataset]:
    """Uniform disjoint draws: a seeded permutation cut into equal chunks."""
    if plan.mode != "iid":
        raise ContractError(f"partition_iid called with mode {plan.mode!r}")
    _check_feasible(pool, plan)
    rng = np.random.default_rng(plan.seed)
    perm = rng.permutation(len(pool))
    size = plan.per_client_size
    return [pool.subset(perm[i * size : (i + 1) * size]) for i in range(plan.client_count)]


def _group_draw(rng, taken, class_of, classes, k, client_id, role):
    """Draw k untaken samples uniformly from the given classes, marking them taken."""
    if k == 0:
        return np.empty(0, dtype=np.int64)
    allowed = np.isin(class_of, classes) & ~taken
    candidates = np.flatnonzero(allowed)
    if len(candidates) < k:
        per_class = {int(c): int(((class_of == c) & ~taken).sum()) for c in classes}
        raise PartitionInfeasibleError(
            f"client {client_id}: {role} classes {sorted(int(c) for c in classes)} "
            f"exhausted, need {k} but only {len(candidates)} remain "
            f"(remaining per class: {per_class})"
        )
    chosen = rng.choice(candidates, size=k, replace=False)
    taken[chosen] = True
    return chosen


def partition_noniid(pool: LabeledDataset, plan: PartitionPlan) -> list[LabeledDataset]:
    """Skewed disjoint draws: per-client random major classes, quota split
    between major and minor classes, all without replacement globally."""
    if plan.mode != "noniid":
        raise ContractError(f"partition_noniid called with mode {plan.mode!r}")
    _check_feasible(pool, plan)
    rng = np.random.default_rng(plan.seed)
    class_count = pool.class_count
    n_major_classes = math.ceil(plan.major_class_fraction * class_count)
    n_major = int(round(plan.major_sample_fraction * plan.per_client_size))
    n_minor = plan.per_client_size - n_major

    class_of = pool.labels
    taken = np.zeros(len(pool), dtype=bool)
    out = []
    for client_id in range(plan.client_count):
        majors = np.sort(rng.choice(class_count, size=n_major_classes, replace=False))
        minors = np.setdiff1d(np.arange(class_count), majors)
        if n_minor > 0 and len(minors) == 0:
            raise PartitionInfeasibleError(
                f"client {client_id}: all classes are major but "
                f"{n_minor} minor samples requested"
            )
        picked_major = _group_draw(rng, taken, class_of, majors, n_major, client_id, "major")
        picked_minor = _group_draw(rng, taken, class_of, minors, n_minor, client_id, "minor")
        out.append(pool.subset(np.concatenate([picked_major, picked_minor])))
    return out


def largest_remainder_apportion(weights, total: int, caps=None) -> np.ndarray:
    """Split ``total`` into integer parts proportional to ``weights``.

    Each part is floor or ceil of its exact share (off by at most one).
    Optional ``caps`` bound each part; ties and surplus go to the lowest
    index first, keeping the result deterministic.
    """
    w = np.asarray(weights, dtype=np.float64)
    if total < 0 or (w < 0).any() or w.sum() <= 0:
        raise ContractError("weights must be nonnegative with positive sum, total >= 0")
    exact = w / w.sum() * total
    counts = np.floor(exact).astype(np.int64)
    if caps is not None:
        caps = np.asarray(caps, dtype=np.int64)
        counts = np.minimum(counts, caps)
    remainder = total - int(counts.sum())
    if remainder > 0:
        frac = exact - np.floor(exact)
        # stable order: largest fractional part first, lowest index on ties
        order = np.lexsort((np.arange(len(w)), -frac))
        for idx in list(order) + list(order):  # second pass if caps bind
            if remainder == 0:
                break
            room = (caps[idx] - counts[idx]) if caps is not None else 1
            if room > 0:
                counts[idx] += 1
                remainder -= 1
        if remainder > 0:
            raise ContractError(f"cannot apportion {total}: caps too tight")
    return counts


def client_test_view(global_test: LabeledDataset, train_label_histogram, seed: int) -> LabeledDataset:
    """Subsample the global test set so class proportions match the
    client's training histogram within one sample per class."""
    hist = np.asarray(train_label_histogram, dtype=np.float64)
    if hist.sum() <= 0:
        raise ContractError("train label histogram is empty")
    if len(hist) != global_test.class_count:
        raise ContractError(
            f"histogram has {len(hist)} classes, test set has {global_test.class_count}"
        )
    props = hist / hist.sum()
    avail = global_test.label_histogram()
    needed = props > 0
    missing = np.flatnonzero(needed & (avail == 0))
    if len(missing):
        raise ContractError(f"classes {missing.tolist()} needed but absent from the test set")

    view_size = int(min(math.floor(avail[c] / props[c]) for c in np.flatnonzero(needed)))
    counts = largest_remainder_apportion(props, view_size, caps=avail)

    rng = np.random.default_rng(seed)
    picks = []
    for c in range(global_test.class_count):
        if counts[c] == 0:
            continue
        pool_c = np.flatnonzero(global_test.labels == c)
        picks.append(rng.choice(pool_c, size=counts[c], replace=False))
    return global_test.subset(np.concatenate(picks))


def partition_preview_rows(datasets: list[LabeledDataset]) -> list[tuple[int, int, int]]:
    """(client_id, class_id, count) rows, all classes listed per client."""
    rows = []
    for client_id, ds in enumerate(datasets):
        for class_id, count in enumerate(ds.label_histogram()):
            rows.append((client_id, class_id, int(count)))
    return rows
