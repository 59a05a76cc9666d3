"""Monte Carlo replicas of the partition function over all 2^N energies.

One replica draws X_sigma for every sigma < 2^N and streams three sums
through leaves of 2^16 configurations:

* D  = sum expm1(a),          a = b X - N beta^2 / 2,  b = beta sqrt(N)
* Dt = the same sum restricted to X <= c (the truncation threshold)
* S  = sum exp(a - m), a log-sum-exp accumulator with shift m

Inside a leaf every sum uses TwoSum compensation.  Leaves are then merged
by a pairwise tree whose shape depends on N only, so results are bitwise
independent of worker count and scheduling.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from numba import njit

from remlab.errors import ConfigError
from remlab.moments import truncation_spec
from remlab.rng import RngSpec, VariateSource
from remlab.theory import LOG2, ModelParams

MAX_N = 34
LEAF_LOG2 = 16
# Leaves whose largest exponent falls below this are re-summed with a shift.
_SHIFT_FLOOR = -600.0

CSV_COLUMNS = ("replica_id", "log_z", "f_n", "t_dev", "w_log", "w_linear", "w_trunc", "trunc_hit", "max_x")


# ---------------------------------------------------------------- leaf kernel


@njit(inline="always", cache=True)
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(inline="always", cache=True)
def _expm1_small(a):
    # Taylor series to degree 15; relative error below 2.3e-16 for |a| < 0.5.
    p = 1.0 / 1307674368000.0
    p = p * a + 1.0 / 87178291200.0
    p = p * a + 1.0 / 6227020800.0
    p = p * a + 1.0 / 479001600.0
    p = p * a + 1.0 / 39916800.0
    p = p * a + 1.0 / 3628800.0
    p = p * a + 1.0 / 362880.0
    p = p * a + 1.0 / 40320.0
    p = p * a + 1.0 / 5040.0
    p = p * a + 1.0 / 720.0
    p = p * a + 1.0 / 120.0
    p = p * a + 1.0 / 24.0
    p = p * a + 1.0 / 6.0
    p = p * a + 0.5
    p = p * a + 1.0
    return p * a


@njit(nogil=True, cache=True)
def expm1_kernel(a):
    """The expm1 used by the leaf kernel (exposed for testing)."""
    if abs(a) < 0.5:
        return _expm1_small(a)
    return math.exp(a) - 1.0


@njit(nogil=True, cache=True)
def _leaf_sums(x, b, h, c):
    """Compensated sums over one leaf.

    Returns (d_hi, d_lo, dt_hi, dt_lo, shift, s_hi, s_lo, xmax) where
    S = (s_hi + s_lo) * exp(shift).
    """
    xmax = -np.inf
    for i in range(x.size):
        if x[i] > xmax:
            xmax = x[i]
    top = b * xmax - h
    shift = 0.0
    if top < _SHIFT_FLOOR:
        shift = top
    ds = 0.0
    dc = 0.0
    ts = 0.0
    tc = 0.0
    ss = 0.0
    sc = 0.0
    for i in range(x.size):
        xi = x[i]
        a = b * xi - h
        ea = math.exp(a)
        if abs(a) < 0.5:
            e = _expm1_small(a)
        else:
            e = ea - 1.0
        ds, err = _two_sum(ds, e)
        dc += err
        if xi <= c:
            ts, err = _two_sum(ts, e)
            tc += err
        if shift != 0.0:
            ea = math.exp(a - shift)
        ss, err = _two_sum(ss, ea)
        sc += err
    d_hi, d_lo = _two_sum(ds, dc)
    t_hi, t_lo = _two_sum(ts, tc)
    s_hi, s_lo = _two_sum(ss, sc)
    return d_hi, d_lo, t_hi, t_lo, shift, s_hi, s_lo, xmax


# ---------------------------------------------------------------- tree merge


def _dd_add(a, b):
    s, e = _two_sum(a[0], b[0])
    e += a[1] + b[1]
    return _two_sum(s, e)


def _merge(u, v):
    d = _dd_add(u[0], v[0])
    dt = _dd_add(u[1], v[1])
    (m1, s1), (m2, s2) = u[2], v[2]
    if m1 == m2:
        lse = (m1, _dd_add(s1, s2))
    else:
        m = max(m1, m2)
        f1, f2 = math.exp(m1 - m), math.exp(m2 - m)
        lse = (m, _dd_add((s1[0] * f1, s1[1] * f1), (s2[0] * f2, s2[1] * f2)))
    return d, dt, lse, max(u[3], v[3])


def pairwise_reduce(items, merge):
    """Reduce a list by a balanced binary tree fixed by its length."""
    if not items:
        raise ValueError("nothing to reduce")
    level = list(items)
    while len(level) > 1:
        nxt = [merge(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class ReplicaRecord:
    replica_id: int
    log_z: float
    f_n: float
    t_dev: float
    w_log: float
    w_linear: float
    w_trunc: float
    trunc_hit: bool
    max_x: float


def _check_guard(params: ModelParams, t: float):
    if params.n > MAX_N:
        raise ConfigError("n", f"simulation is limited to N <= {MAX_N}, got {params.n}")
    if not (isinstance(t, (int, float)) and math.isfinite(t) and t > 0):
        raise ConfigError("t", f"truncation scale must be a positive real, got {t!r}")


def _leaf_layout(n: int):
    size = 1 << min(n, LEAF_LOG2)
    return size, (1 << n) // size


def _leaf(b, h, c, source, replica, k, size, buf):
    source.fill(replica, k * size, buf)
    d_hi, d_lo, t_hi, t_lo, shift, s_hi, s_lo, xmax = _leaf_sums(buf, b, h, c)
    return (d_hi, d_lo), (t_hi, t_lo), (shift, (s_hi, s_lo)), xmax


def _finish(params: ModelParams, replica_id: int, acc, c: float) -> ReplicaRecord:
    n, beta = params.n, params.beta
    h = 0.5 * n * beta * beta
    (d_hi, d_lo), (t_hi, t_lo), (shift, (s_hi, s_lo)), xmax = acc
    # log(Z / E Z) = shift + log(S 2^-N)
    log_ratio = shift + math.log(math.ldexp(s_hi + s_lo, -n))
    log_z = n * LOG2 + h + log_ratio
    f_n = LOG2 + (h + log_ratio) / n
    t_dev = math.ldexp(d_hi + d_lo, -n)
    fluct = 0.5 * n * (LOG2 - beta * beta)
    if t_dev < -0.5:
        # Deep negative deviations: D has cancelled against -2^N, the log path has not.
        t_dev = math.expm1(log_ratio)
        w_log = math.exp(fluct) * log_ratio
    else:
        w_log = math.exp(fluct) * math.log1p(t_dev)
    scale = math.exp(-0.5 * n * LOG2 - h)
    w_linear = scale * (d_hi + d_lo)
    trunc_hit = bool(xmax > c)
    w_trunc = scale * (t_hi + t_lo)
    return ReplicaRecord(replica_id, log_z, f_n, t_dev, w_log, w_linear, w_trunc, trunc_hit, xmax)


def _sample_with(params: ModelParams, t: float, source: VariateSource, replica_id: int,
                 executor: Optional[ThreadPoolExecutor] = None) -> ReplicaRecord:
    n = params.n
    b = params.beta * math.sqrt(n)
    h = 0.5 * n * params.beta ** 2
    # at beta = 0 every Y vanishes, so nothing is ever truncated
    c = truncation_spec(params, t).c if params.beta > 0 else math.inf
    size, leaves = _leaf_layout(n)

    def one(k):
        return _leaf(b, h, c, source, replica_id, k, size, np.empty(size))

    if executor is None or leaves == 1:
        parts = [one(k) for k in range(leaves)]
    else:
        parts = list(executor.map(one, range(leaves)))
    return _finish(params, replica_id, pairwise_reduce(parts, _merge), c)


def sample_replica(params: ModelParams, t: float, rng, replica_id: int) -> ReplicaRecord:
    """One replica; ``rng`` is an RngSpec or any VariateSource."""
    _check_guard(params, t)
    return _sample_with(params, float(t), rng, int(replica_id))


# ---------------------------------------------------------------- datasets


_FLOAT_COLUMNS = ("log_z", "f_n", "t_dev", "w_log", "w_linear", "w_trunc", "max_x")


@dataclass(frozen=True)
class Summary:
    mean: float
    variance: float
    count: int


def summarize(values: np.ndarray) -> Summary:
    """Mean and unbiased variance with correctly rounded sums (order independent)."""
    n = int(values.size)
    if n == 0:
        return Summary(0.0, 0.0, 0)
    mean = math.fsum(values.tolist()) / n
    if n == 1:
        return Summary(mean, 0.0, 1)
    dev = values - mean
    return Summary(mean, math.fsum((dev * dev).tolist()) / (n - 1), n)


class ReplicaDataset:
    """Immutable column store of replica records, ordered by replica_id."""

    def __init__(self, params: ModelParams, t: float, columns: dict):
        self.params = params
        self.t = float(t)
        self.replica_id = np.asarray(columns["replica_id"], dtype=np.int64)
        for name in _FLOAT_COLUMNS:
            setattr(self, name, np.asarray(columns[name], dtype=np.float64))
        self.trunc_hit = np.asarray(columns["trunc_hit"], dtype=bool)
        for name in CSV_COLUMNS:
            col = getattr(self, name)
            if col.shape != self.replica_id.shape:
                raise ValueError(f"column {name} has shape {col.shape}, expected {self.replica_id.shape}")
            col.setflags(write=False)

    @classmethod
    def from_records(cls, params: ModelParams, t: float, records) -> "ReplicaDataset":
        recs = sorted(records, key=lambda r: r.replica_id)
        return cls(params, t, {name: [getattr(r, name) for r in recs] for name in CSV_COLUMNS})

    def __len__(self) -> int:
        return int(self.replica_id.size)

    def record(self, i: int) -> ReplicaRecord:
        return ReplicaRecord(**{name: getattr(self, name)[i].item() for name in CSV_COLUMNS})

    def head(self, count: int) -> "ReplicaDataset":
        """The first ``count`` replicas (a view, not a copy)."""
        return ReplicaDataset(self.params, self.t, {name: getattr(self, name)[:count] for name in CSV_COLUMNS})

    def summaries(self) -> dict:
        out = {name: summarize(getattr(self, name)) for name in _FLOAT_COLUMNS}
        out["trunc_hit"] = summarize(self.trunc_hit.astype(np.float64))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        cols = [getattr(self, name).tolist() for name in CSV_COLUMNS]
        for row in zip(*cols):
            w.writerow([row[0]] + [repr(v) for v in row[1:7]] + [int(row[7]), repr(row[8])])
        return buf.getvalue()


assert tuple(f.name for f in fields(ReplicaRecord)) == CSV_COLUMNS


def run_replicas(params: ModelParams, t: float, count: int, rng, workers: int = 1) -> ReplicaDataset:
    """Replicas 0..count-1; the result does not depend on ``workers``."""
    _check_guard(params, t)
    if isinstance(count, bool) or not isinstance(count, (int, np.integer)) or count < 0:
        raise ConfigError("replicas", f"replica count must be a nonnegative integer, got {count!r}")
    if isinstance(workers, bool) or not isinstance(workers, (int, np.integer)) or workers < 1:
        raise ConfigError("workers", f"worker count must be a positive integer, got {workers!r}")
    t = float(t)
    if count == 0:
        return ReplicaDataset.from_records(params, t, [])
    if workers == 1:
        return ReplicaDataset.from_records(params, t, [_sample_with(params, t, rng, r) for r in range(count)])
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        if count < workers:
            recs = [_sample_with(params, t, rng, r, executor=pool) for r in range(count)]
        else:
            recs = list(pool.map(lambda r: _sample_with(params, t, rng, r), range(count),
                                 chunksize=1))
    return ReplicaDataset.from_records(params, t, recs)
