"""Treatment assignment: random draws, exhaustive enumeration, observation.

Two mechanisms are supported.  Complete randomization (CR) assigns exactly
r = N / 2^K units to each treatment.  Matched-pair randomization (MP) draws an
independent uniform bijection between units and treatments inside every block
of the pairing.

Enumeration order is lexicographic over treatment-label sequences.  For CR the
sequence is indexed by unit; for MP it is the concatenation of the labels of
each block's units in block order, so block 1 varies slowest.  Both orders
support ranking and unranking, which lets the oracle split the space into
disjoint index ranges.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import EnumerationCapError, PairfactError
from .kernels import next_permutation
from .population import Pairing, ScienceTable

DEFAULT_CAP = 10**7


def default_cap() -> int:
    env = os.environ.get("PAIRFACT_CAP")
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise PairfactError(f"PAIRFACT_CAP must be an integer, got {env!r}")
        if cap < 1:
            raise PairfactError("PAIRFACT_CAP must be >= 1")
        return cap
    return DEFAULT_CAP


@dataclass(frozen=True)
class Assignment:
    """``treatment_of[i]`` is the 0-based treatment of unit ``i``."""

    k: int
    treatment_of: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.array(self.treatment_of, dtype=np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "treatment_of", t)

    @property
    def n(self) -> int:
        return self.treatment_of.shape[0]

    def indicator(self) -> np.ndarray:
        """W[i, l] = 1 if unit i receives treatment l."""
        w = np.zeros((self.n, 1 << self.k), dtype=np.int64)
        w[np.arange(self.n), self.treatment_of] = 1
        return w

    def validate(self, pairing: Pairing | None = None) -> None:
        size = 1 << self.k
        t = self.treatment_of
        if t.min(initial=0) < 0 or t.max(initial=0) >= size:
            raise PairfactError("assignment contains an out-of-range treatment index")
        counts = np.bincount(t, minlength=size)
        if self.n % size or not np.all(counts == self.n // size):
            raise PairfactError(
                f"assignment does not give every treatment the same number of units: {counts.tolist()}"
            )
        if pairing is not None:
            for lab, block in zip(pairing.labels, pairing.blocks):
                if len(set(t[list(block)].tolist())) != size:
                    raise PairfactError(f"pair {lab} does not receive every treatment once")


@dataclass(frozen=True)
class ObservedData:
    """What an experimenter sees: one treatment and one outcome per unit.

    ``pair`` holds 0-based block indices for matched-pair data and is ``None``
    for completely randomized data.
    """

    k: int
    treatment: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    pair: np.ndarray | None = field(default=None, repr=False)
    unit_ids: tuple[str, ...] = ()
    pair_labels: tuple[str, ...] = ()

    def __post_init__(self):
        t = np.array(self.treatment, dtype=np.int64)
        y = np.array(self.y, dtype=np.float64)
        if t.ndim != 1 or y.shape != t.shape:
            raise PairfactError("treatment and outcome arrays must be 1-d and equal length")
        if not np.all(np.isfinite(y)):
            raise PairfactError("observed outcomes contain non-finite values")
        if t.size and (t.min() < 0 or t.max() >= 1 << self.k):
            raise PairfactError("observed data contains an out-of-range treatment index")
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "y", y)
        if self.pair is not None:
            p = np.array(self.pair, dtype=np.int64)
            if p.shape != t.shape:
                raise PairfactError("pair array must match the number of units")
            object.__setattr__(self, "pair", p)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def by_treatment(self) -> list[np.ndarray]:
        """Observed outcomes grouped by treatment, in model-matrix row order."""
        return [self.y[self.treatment == l] for l in range(1 << self.k)]

    def replicates(self) -> int:
        """Common number of units per treatment; rejects unequal replication."""
        counts = np.bincount(self.treatment, minlength=1 << self.k)
        if counts.min() == 0:
            l = int(np.argmin(counts))
            raise PairfactError(f"treatment {l + 1} has no observed units")
        if not np.all(counts == counts[0]):
            raise PairfactError(
                f"unequal replication across treatments: {counts.tolist()}"
            )
        return int(counts[0])

    def pair_table(self) -> np.ndarray:
        """Y_j^obs(z_l) as an (r, 2^K) matrix; one observation per cell."""
        if self.pair is None:
            raise PairfactError("observed data has no pairing")
        size = 1 << self.k
        r = int(self.pair.max()) + 1 if self.n else 0
        table = np.full((r, size), np.nan)
        for j, l, v in zip(self.pair, self.treatment, self.y):
            if not np.isnan(table[j, l]):
                raise PairfactError(f"pair {self._label(j)} has two observations for treatment {l + 1}")
            table[j, l] = v
        missing = np.argwhere(np.isnan(table))
        if missing.size:
            j, l = missing[0]
            raise PairfactError(f"pair {self._label(j)} has no observation for treatment {l + 1}")
        return table

    def _label(self, j: int) -> str:
        return self.pair_labels[j] if j < len(self.pair_labels) else str(j + 1)


def observe(st: ScienceTable, a: Assignment, p: Pairing | None = None) -> ObservedData:
    """Reveal the potential outcome of each unit under its assigned treatment."""
    if a.k != st.k or a.n != st.n:
        raise PairfactError(
            f"assignment (K={a.k}, N={a.n}) does not match science table (K={st.k}, N={st.n})"
        )
    if p is not None:
        p.validate(st.n, st.k)
        a.validate(p)
    y = st.outcomes[np.arange(st.n), a.treatment_of]
    return ObservedData(
        k=st.k,
        treatment=a.treatment_of,
        y=y,
        pair=None if p is None else p.pair_of(st.n),
        unit_ids=st.unit_ids,
        pair_labels=() if p is None else p.labels,
    )


# -- counting -----------------------------------------------------------------


def _replicates(n: int, k: int) -> int:
    size = 1 << k
    if n < 1 or n % size:
        raise PairfactError(f"N={n} is not a positive multiple of 2^K={size}")
    return n // size


def count_complete(n: int, k: int) -> int:
    """N! / (r!)^(2^K)."""
    r = _replicates(n, k)
    return math.factorial(n) // math.factorial(r) ** (1 << k)


def count_matched_pair(r: int, k: int) -> int:
    """(2^K!)^r."""
    return math.factorial(1 << k) ** r


def _check_cap(count: int, cap: int | None) -> None:
    cap = default_cap() if cap is None else cap
    if count > cap:
        raise EnumerationCapError(count, cap)


# -- random draws -------------------------------------------------------------


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise PairfactError("seed must be a 64-bit unsigned integer")
    return np.random.default_rng(seed)


def draw_complete(n: int, k: int, seed) -> Assignment:
    """Uniform CR assignment: a Fisher-Yates shuffle of the label multiset."""
    r = _replicates(n, k)
    labels = np.repeat(np.arange(1 << k), r)
    return Assignment(k, _rng(seed).permutation(labels))


def draw_complete_many(n: int, k: int, size: int, seed) -> np.ndarray:
    """``size`` independent CR assignments as rows of an int array."""
    r = _replicates(n, k)
    labels = np.repeat(np.arange(1 << k, dtype=np.int64), r)
    return _rng(seed).permuted(np.tile(labels, (size, 1)), axis=1)


def draw_matched_pair(p: Pairing, k: int, seed) -> Assignment:
    """Independent uniform unit-to-treatment bijection inside every block."""
    n = sum(len(b) for b in p.blocks)
    p.validate(n, k)
    rng = _rng(seed)
    t = np.empty(n, dtype=np.int64)
    for block in p.blocks:
        t[list(block)] = rng.permutation(1 << k)
    return Assignment(k, t)


def draw_matched_pair_many(p: Pairing, k: int, size: int, seed) -> np.ndarray:
    n = sum(len(b) for b in p.blocks)
    p.validate(n, k)
    rng = _rng(seed)
    base = np.tile(np.arange(1 << k, dtype=np.int64), (size, 1))
    out = np.empty((size, n), dtype=np.int64)
    for block in p.blocks:
        out[:, list(block)] = rng.permuted(base, axis=1)
    return out


# -- enumeration --------------------------------------------------------------


def _multinomial(counts) -> int:
    total = math.factorial(sum(counts))
    for c in counts:
        total //= math.factorial(c)
    return total


def unrank_complete(index: int, n: int, k: int) -> np.ndarray:
    """The ``index``-th (0-based) CR label sequence in lexicographic order."""
    r = _replicates(n, k)
    remaining = [r] * (1 << k)
    total = count_complete(n, k)
    if not 0 <= index < total:
        raise IndexError(f"rank {index} out of range for {total} assignments")
    out = np.empty(n, dtype=np.int64)
    for pos in range(n):
        for l, c in enumerate(remaining):
            if c == 0:
                continue
            remaining[l] -= 1
            block = _multinomial(remaining)
            if index < block:
                out[pos] = l
                break
            index -= block
            remaining[l] += 1
    return out


def rank_complete(labels) -> int:
    """Inverse of :func:`unrank_complete`."""
    labels = [int(v) for v in labels]
    size = max(labels) + 1
    remaining = [labels.count(l) for l in range(size)]
    rank = 0
    for v in labels:
        for l in range(v):
            if remaining[l]:
                remaining[l] -= 1
                rank += _multinomial(remaining)
                remaining[l] += 1
        remaining[v] -= 1
    return rank


def _unrank_perm(index: int, size: int) -> list[int]:
    pool = list(range(size))
    out = []
    for pos in range(size, 0, -1):
        f = math.factorial(pos - 1)
        q, index = divmod(index, f)
        out.append(pool.pop(q))
    return out


def _rank_perm(perm) -> int:
    pool = sorted(perm)
    rank = 0
    for pos, v in enumerate(perm):
        q = pool.index(v)
        rank += q * math.factorial(len(perm) - pos - 1)
        pool.pop(q)
    return rank


def unrank_matched_pair(index: int, r: int, k: int) -> np.ndarray:
    """Per-block label permutations, shape (r, 2^K), for MP rank ``index``.

    Row ``j`` gives the treatments of the units of block ``j`` in block order.
    """
    size = 1 << k
    total = count_matched_pair(r, k)
    if not 0 <= index < total:
        raise IndexError(f"rank {index} out of range for {total} assignments")
    base = math.factorial(size)
    out = np.empty((r, size), dtype=np.int64)
    for j in range(r - 1, -1, -1):
        index, digit = divmod(index, base)
        out[j] = _unrank_perm(digit, size)
    return out


def rank_matched_pair(perms) -> int:
    perms = np.asarray(perms)
    base = math.factorial(perms.shape[1])
    rank = 0
    for row in perms:
        rank = rank * base + _rank_perm(row.tolist())
    return rank


def block_labels(a: Assignment, p: Pairing) -> np.ndarray:
    """The (r, 2^K) per-block label matrix of an MP assignment."""
    return a.treatment_of[p.as_array()]


def enumerate_complete(n: int, k: int, cap: int | None = None) -> Iterator[Assignment]:
    """Every CR assignment exactly once, lexicographic order."""
    r = _replicates(n, k)
    _check_cap(count_complete(n, k), cap)
    state = np.repeat(np.arange(1 << k, dtype=np.int64), r)
    while True:
        yield Assignment(k, state.copy())
        if not next_permutation(state):
            return


def enumerate_matched_pair(p: Pairing, k: int, cap: int | None = None) -> Iterator[Assignment]:
    """The full product space of per-block bijections, exactly once each."""
    n = sum(len(b) for b in p.blocks)
    p.validate(n, k)
    _check_cap(count_matched_pair(p.r, k), cap)
    blocks = p.as_array()
    perms = np.tile(np.arange(1 << k, dtype=np.int64), (p.r, 1))
    t = np.empty(n, dtype=np.int64)
    while True:
        t[blocks] = perms
        yield Assignment(k, t.copy())
        j = p.r - 1
        while j >= 0 and not next_permutation(perms[j]):
            j -= 1
        if j < 0:
            return
