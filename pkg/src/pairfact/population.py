"""Science tables, pairings, and population-level summaries.

A science table holds every potential outcome: ``outcomes[i, l]`` is the
outcome of unit ``i`` under treatment ``l`` (model-matrix row order).  It is
only ever handed to closed-form "truth" computations and to the enumeration
oracle; estimators see :class:`~pairfact.randomization.ObservedData` only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import PairfactError
from .model_matrix import ModelMatrix


@dataclass(frozen=True)
class ScienceTable:
    k: int
    outcomes: np.ndarray = field(repr=False)
    unit_ids: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.array(self.outcomes, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != 1 << self.k:
            raise PairfactError(
                f"outcomes must have shape (N, {1 << self.k}), got {y.shape}"
            )
        if y.shape[0] < 1:
            raise PairfactError("science table has no units")
        if not np.all(np.isfinite(y)):
            raise PairfactError("science table contains non-finite outcomes")
        y.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        ids = tuple(str(u) for u in self.unit_ids) or tuple(
            str(i + 1) for i in range(y.shape[0])
        )
        if len(ids) != y.shape[0]:
            raise PairfactError("unit_ids length does not match outcome rows")
        object.__setattr__(self, "unit_ids", ids)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_treatments(self) -> int:
        return 1 << self.k

    def replicates(self) -> int:
        """r = N / 2^K; raises if N is not a multiple of 2^K."""
        size = self.n_treatments
        if self.n % size:
            raise PairfactError(
                f"N={self.n} units is not a multiple of 2^K={size}"
            )
        return self.n // size


@dataclass(frozen=True)
class Pairing:
    """Partition of unit indices (0-based) into blocks of size 2^K."""

    blocks: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        labels = tuple(str(s) for s in self.labels) or tuple(
            str(j + 1) for j in range(len(blocks))
        )
        if len(labels) != len(blocks):
            raise PairfactError("pairing labels do not match number of blocks")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, pair_of: Sequence) -> "Pairing":
        """Group unit positions by pair label, in order of first appearance."""
        groups: dict[str, list[int]] = {}
        for i, lab in enumerate(pair_of):
            groups.setdefault(str(lab), []).append(i)
        return cls(tuple(tuple(v) for v in groups.values()), tuple(groups))

    @classmethod
    def consecutive(cls, n: int, k: int) -> "Pairing":
        size = 1 << k
        return cls(tuple(tuple(range(s, s + size)) for s in range(0, n, size)))

    @property
    def r(self) -> int:
        return len(self.blocks)

    def as_array(self) -> np.ndarray:
        return np.array(self.blocks, dtype=np.int64)

    def pair_of(self, n: int) -> np.ndarray:
        out = np.full(n, -1, dtype=np.int64)
        for j, b in enumerate(self.blocks):
            out[list(b)] = j
        return out

    def validate(self, n: int, k: int) -> None:
        size = 1 << k
        seen: set[int] = set()
        for lab, b in zip(self.labels, self.blocks):
            if len(b) != size:
                raise PairfactError(
                    f"pair {lab} has size {len(b)}, expected {size}"
                )
            for i in b:
                if not 0 <= i < n:
                    raise PairfactError(f"pair {lab} references unknown unit {i + 1}")
                if i in seen:
                    raise PairfactError(f"unit {i + 1} appears in more than one pair")
                seen.add(i)
        if len(seen) != n:
            missing = sorted(set(range(n)) - seen)
            raise PairfactError(
                f"pairing does not cover units {[i + 1 for i in missing]}"
            )


def _check(st: ScienceTable, m: ModelMatrix) -> None:
    if st.k != m.k:
        raise PairfactError(f"science table has K={st.k} but model matrix has K={m.k}")


def unit_effects(st: ScienceTable, m: ModelMatrix) -> np.ndarray:
    """Per-unit factorial effects tau_i, shape (N, 2^K)."""
    _check(st, m)
    return m.contrast(st.outcomes)


def population_effect(st: ScienceTable, m: ModelMatrix) -> np.ndarray:
    _check(st, m)
    return m.contrast(treatment_means(st))


def treatment_means(st: ScienceTable) -> np.ndarray:
    return st.outcomes.mean(axis=0)


def treatment_variance(st: ScienceTable, l: int) -> float:
    """Finite-population variance of treatment ``l`` outcomes, divisor N-1."""
    if st.n < 2:
        raise PairfactError("treatment variance needs at least 2 units")
    if not 0 <= l < st.n_treatments:
        raise IndexError(f"treatment index {l} out of range")
    return float(np.var(st.outcomes[:, l], ddof=1))


def treatment_variances(st: ScienceTable) -> np.ndarray:
    if st.n < 2:
        raise PairfactError("treatment variance needs at least 2 units")
    return np.var(st.outcomes, axis=0, ddof=1)


def _grouped(st: ScienceTable, p: Pairing) -> np.ndarray:
    p.validate(st.n, st.k)
    return st.outcomes[p.as_array()]


def pair_means(st: ScienceTable, p: Pairing) -> np.ndarray:
    """Within-pair treatment means, shape (r, 2^K)."""
    return _grouped(st, p).mean(axis=1)


def within_pair_variances(st: ScienceTable, p: Pairing) -> np.ndarray:
    """Within-pair outcome variances with divisor 2^K - 1, shape (r, 2^K)."""
    return np.var(_grouped(st, p), axis=1, ddof=1)


def pair_effects(st: ScienceTable, p: Pairing, m: ModelMatrix) -> np.ndarray:
    """Pair-level factorial effects tau_{j.}, shape (r, 2^K)."""
    _check(st, m)
    return m.contrast(pair_means(st, p))


def scatter(rows: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Sum of outer products (row - center)(row - center)^T."""
    d = np.atleast_2d(rows) - center
    return d.T @ d


def effect_scatter(st: ScienceTable, m: ModelMatrix) -> np.ndarray:
    """sum_i (tau_i - tau)(tau_i - tau)^T."""
    tau_i = unit_effects(st, m)
    return scatter(tau_i, tau_i.mean(axis=0))


def between_pair_scatter(st: ScienceTable, p: Pairing, m: ModelMatrix) -> np.ndarray:
    """sum_j (tau_{j.} - tau)(tau_{j.} - tau)^T."""
    return scatter(pair_effects(st, p, m), population_effect(st, m))


def within_pair_scatter(st: ScienceTable, p: Pairing, m: ModelMatrix) -> np.ndarray:
    """sum_j sum_{i in pair j} (tau_i - tau_{j.})(tau_i - tau_{j.})^T."""
    tau_i = unit_effects(st, m)
    tau_j = pair_effects(st, p, m)
    out = np.zeros((m.size, m.size))
    for j, block in enumerate(p.blocks):
        out += scatter(tau_i[list(block)], tau_j[j])
    return out
