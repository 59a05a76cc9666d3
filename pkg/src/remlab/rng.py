"""Random-access Gaussian variates indexed by (seed, replica, sigma).

Words come from the Philox4x64-10 counter-based generator shipped with
numpy.  The word for configuration ``sigma`` of replica ``r`` is lane
``sigma % 4`` of the block produced for

    key = (seed, 0),   counter = (sigma // 4 + 1, r, 0, 0).

The ``+ 1`` is numpy's convention: the counter is incremented before the
first block is emitted.  A word w maps to u = (w + 1/2) / 2^64 and then to
x = Phi^-1(u).  The upper half of the word range is folded onto the lower
half (x(w) = -x(~w)), so the quantile is only ever evaluated on u <= 1/2
where no precision is lost to 1 - u.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numba as nb
import numpy as np
from numba import njit

from remlab.errors import ConfigError
from remlab.gauss import quantile_lower

_U64 = (1 << 64) - 1
_S63 = np.uint64(63)
_ZERO = np.uint64(0)
_TWO_M64 = 2.0 ** -64


@njit(nogil=True, cache=True)
def words_to_normals(words, out):
    """Map uint64 words to standard normals in place of ``out``."""
    for i in range(words.size):
        w = words[i]
        s = w >> _S63
        m = w ^ (_ZERO - s)
        u = (float(nb.int64(m)) + 0.5) * _TWO_M64
        out[i] = quantile_lower(u) * (1.0 - 2.0 * float(nb.int64(s)))


class VariateSource(Protocol):
    """Anything that can fill a buffer with the normals of one replica."""

    def fill(self, replica: int, start: int, out: np.ndarray) -> None:
        """Write X_sigma for sigma in [start, start + len(out)) into ``out``."""


@dataclass(frozen=True)
class RngSpec:
    """Production variate source keyed by a 64-bit master seed."""

    master_seed: int

    def __post_init__(self):
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, (int, np.integer)):
            raise ConfigError("seed", f"seed must be an integer, got {self.master_seed!r}")
        if not 0 <= int(self.master_seed) <= _U64:
            raise ConfigError("seed", f"seed must fit in 64 unsigned bits, got {self.master_seed!r}")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def words(self, replica: int, start: int, count: int) -> np.ndarray:
        """Raw 64-bit words for sigma in [start, start + count)."""
        if count <= 0:
            return np.empty(0, dtype=np.uint64)
        block, lane = divmod(int(start), 4)
        gen = np.random.Philox(
            key=np.array([self.master_seed, 0], dtype=np.uint64),
            counter=np.array([block, int(replica) & _U64, 0, 0], dtype=np.uint64),
        )
        raw = gen.random_raw(count + lane)
        return raw[lane:] if lane else raw

    def fill(self, replica: int, start: int, out: np.ndarray) -> None:
        words_to_normals(self.words(replica, start, out.size), out)


@dataclass(frozen=True)
class ConstantSource:
    """Every variate equals ``value``."""

    value: float = 0.0

    def fill(self, replica: int, start: int, out: np.ndarray) -> None:
        out.fill(self.value)


class TableSource:
    """Variates read from a table, one row per replica, cycled along sigma."""

    def __init__(self, rows: Sequence[Sequence[float]]):
        self._rows = [np.asarray(r, dtype=np.float64) for r in rows]
        if not self._rows or any(r.size == 0 for r in self._rows):
            raise ValueError("table source needs at least one nonempty row")

    def fill(self, replica: int, start: int, out: np.ndarray) -> None:
        row = self._rows[replica % len(self._rows)]
        idx = (np.arange(out.size) + start) % row.size
        out[:] = row[idx]
