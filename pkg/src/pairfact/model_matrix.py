"""The 2^K factorial model matrix.

Columns are ordered as: the all-ones column, the K main-effect columns, then
the interaction columns, sorted first by subset size and then
lexicographically.  Rows index the treatment combinations; row ``j`` of the
main-effect block is the sign pattern of treatment ``j``.

Indices in this module are 0-based.  Files and the CLI use 1-based indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
import string

import numpy as np

from .errors import PairfactError

MAX_FACTORS = 20


@dataclass(frozen=True)
class ModelMatrix:
    """Integer +/-1 model matrix of a 2^K design.

    Attributes
    ----------
    k : int
        Number of two-level factors.
    entries : ndarray of int8, shape (2**k, 2**k)
        Read-only matrix; column 0 is the null effect.
    column_labels : tuple of tuple of int
        Factor subset for each column, 1-based factor numbers, ``()`` for
        column 0.
    """

    k: int
    entries: np.ndarray = field(repr=False)
    column_labels: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return 1 << self.k

    @property
    def scale(self) -> float:
        """The factor 2^-(K-1) applied to every contrast."""
        return 2.0 ** (1 - self.k)

    @property
    def effect_names(self) -> list[str]:
        """Column names like ``I``, ``A``, ``B``, ``AB``."""
        return [effect_name(lab) for lab in self.column_labels]

    def as_float(self) -> np.ndarray:
        return self.entries.astype(np.float64)

    def treatment_combinations(self) -> np.ndarray:
        """Sign patterns z_j, one row per treatment, shape (2**k, k)."""
        return self.entries[:, 1 : self.k + 1].copy()

    def row(self, j: int) -> np.ndarray:
        """Row ``j`` (0-based) of the model matrix."""
        if not 0 <= j < self.size:
            raise IndexError(f"row index {j} out of range for 2^{self.k} design")
        return self.entries[j].copy()

    def contrast(self, y: np.ndarray) -> np.ndarray:
        """Apply 2^-(K-1) H^T along the last axis of ``y``."""
        return self.scale * (np.asarray(y, dtype=np.float64) @ self.as_float())


def effect_name(label: tuple[int, ...]) -> str:
    if not label:
        return "I"
    return "".join(_factor_letter(f) for f in label)


def _factor_letter(f: int) -> str:
    letters = string.ascii_uppercase
    if f <= len(letters):
        return letters[f - 1]
    return f"F{f}"


def interaction_subsets(k: int) -> list[tuple[int, ...]]:
    """Subsets of {1..k} with at least two elements, by size then lexicographic."""
    return [s for size in range(2, k + 1) for s in combinations(range(1, k + 1), size)]


def build_model_matrix(k: int) -> ModelMatrix:
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool):
        raise PairfactError(f"factor count must be an integer, got {k!r}")
    k = int(k)
    if not 1 <= k <= MAX_FACTORS:
        raise PairfactError(f"factor count must be in 1..{MAX_FACTORS}, got {k}")
    return _build(k)


@lru_cache(maxsize=None)
def _build(k: int) -> ModelMatrix:
    n = 1 << k
    h = np.empty((n, n), dtype=np.int8)
    h[:, 0] = 1
    for f in range(1, k + 1):
        block = 1 << (k - f)
        pattern = np.repeat(np.array([-1, 1], dtype=np.int8), block)
        h[:, f] = np.tile(pattern, 1 << (f - 1))
    labels: list[tuple[int, ...]] = [()] + [(f,) for f in range(1, k + 1)]
    for c, subset in enumerate(interaction_subsets(k), start=k + 1):
        h[:, c] = np.prod(h[:, list(subset)], axis=1)
        labels.append(subset)
    h.setflags(write=False)
    return ModelMatrix(k=k, entries=h, column_labels=tuple(labels))


def pattern_label(z) -> str:
    """Render a sign pattern as ``(-1,+1)``."""
    return "(" + ",".join("+1" if int(v) > 0 else "-1" for v in z) + ")"


def parse_pattern(text: str) -> tuple[int, ...]:
    """Inverse of :func:`pattern_label`; accepts ``1``/``+1``/``-1`` entries."""
    s = text.strip()
    if s.startswith("Y"):
        s = s[1:].strip()
    if not (s.startswith("(") and s.endswith(")")):
        raise PairfactError(f"malformed treatment pattern {text!r}")
    parts = [p.strip() for p in s[1:-1].split(",")]
    out = []
    for p in parts:
        if p in ("+1", "1"):
            out.append(1)
        elif p == "-1":
            out.append(-1)
        else:
            raise PairfactError(f"malformed treatment pattern {text!r}")
    return tuple(out)


def pattern_index(z: tuple[int, ...]) -> int:
    """0-based model-matrix row of sign pattern ``z`` (-1 before +1, factor 1 slowest)."""
    idx = 0
    for v in z:
        idx = 2 * idx + (1 if v > 0 else 0)
    return idx
