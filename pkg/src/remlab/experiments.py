"""Studies that confront simulated replicas with the deterministic predictions.

Every study returns a StudyReport: a grid of cells, each a flat dict whose
keys are fixed per study kind (see ``CELL_COLUMNS``), plus named checks.
All cells of one study share the master seed, so cells at different N use
common random numbers; this sharpens trend comparisons across N.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from remlab import constants as K
from remlab.errors import DomainError, UnsupportedRegime
from remlab.gauss import log_gauss_tail
from remlab.moments import chernoff_bound, truncation_event_rate, truncation_hit_probability, truncation_spec
from remlab.rng import RngSpec
from remlab.simulator import ReplicaDataset, run_replicas
from remlab.stats import intervals_overlap, ks_distance, tail_estimate, wilson_interval
from remlab.theory import (
    BETA_CRIT, LOG2, ModelParams, Regime, ScalingRegime, ScalingSchedule, classify_scaling,
    fluct_scale_log, ldp_rate, limiting_free_energy, resolve_regime,
)

CELL_COLUMNS = {
    "lln": ("beta", "n", "replicas", "seed", "mean_f", "sd_f", "target_f", "gap", "all_log2"),
    "clt": ("beta", "n", "replicas", "seed", "target_s2", "var_w_log", "se_var", "z_var",
            "ks_finite", "ks_half", "ks_one", "var_ok", "ks_ok"),
    "tail": ("beta", "n", "t", "x", "side", "replicas", "seed", "threshold", "hits", "p_hat",
             "wilson_lo", "wilson_hi", "norm_log_p", "gauss_q", "gauss_norm_log_q", "chernoff",
             "trunc_hit_freq", "chernoff_consistent"),
    "equiv": ("beta", "n", "t", "replicas", "seed", "eligible", "max_log_linear", "q999_log_linear",
              "max_bound", "log_linear_violations", "max_linear_trunc", "trunc_mismatch", "trunc_hits",
              "trunc_freq", "trunc_wilson_lo", "trunc_wilson_hi", "trunc_exact", "trunc_consistent",
              "rate_exact", "rate_predicted"),
    "overscale": ("beta", "n", "x", "replicas", "seed", "threshold", "speed", "hits", "p_hat",
                  "wilson_lo", "wilson_hi", "norm_log_p", "gauss_q", "gauss_norm_log_q"),
    "ldp": ("beta", "n", "delta", "side", "replicas", "seed", "level", "hits", "p_hat",
            "wilson_lo", "wilson_hi", "rate_emp", "rate_theory", "ratio", "ratio_ok"),
}


@dataclass
class StudyReport:
    """Result of one study.  ``wall_seconds`` is kept out of the serialized forms."""

    kind: str
    grid: dict
    cells: list
    seed: int
    replicas: int
    checks: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": self.grid, "seed": self.seed, "replicas": self.replicas,
                "checks": self.checks, "cells": self.cells}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = CELL_COLUMNS[self.kind]
        w.writerow(cols)
        for cell in self.cells:
            w.writerow([format_value(cell[c]) for c in cols])
        return buf.getvalue()


def format_value(v) -> str:
    """Shortest round-trip text for floats; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class DatasetCache:
    """Reuses simulated replicas across studies.

    A request for fewer replicas than a cached run with the same
    (beta, N, t, seed) returns its leading replicas, which are exactly what
    a fresh run would produce.
    """

    def __init__(self):
        self._runs = {}

    def get(self, params: ModelParams, t: float, count: int, seed: int, workers: int = 1) -> ReplicaDataset:
        key = (params.beta, params.n, float(t), int(seed))
        have = self._runs.get(key)
        if have is not None and len(have) >= count:
            return have.head(count)
        ds = run_replicas(params, t, count, RngSpec(seed), workers)
        self._runs[key] = ds
        return ds


def _data(cache, params, t, count, seed, workers):
    if cache is None:
        return run_replicas(params, t, count, RngSpec(seed), workers)
    return cache.get(params, t, count, seed, workers)


def _fsum_mean(v: np.ndarray) -> float:
    return math.fsum(v.tolist()) / v.size


def _fsum_var(v: np.ndarray) -> tuple:
    """Unbiased variance and its standard error from the fourth central moment."""
    n = v.size
    mean = _fsum_mean(v)
    d2 = (v - mean) ** 2
    m2 = math.fsum(d2.tolist()) / n
    m4 = math.fsum((d2 * d2).tolist()) / n
    var = m2 * n / (n - 1)
    se = math.sqrt(max(m4 - m2 * m2, 0.0) / n)
    return var, se


def _finite(v):
    return None if v is None or not math.isfinite(v) else float(v)


def _check_replicas(replicas):
    if isinstance(replicas, bool) or not isinstance(replicas, (int, np.integer)) or replicas < 1:
        raise DomainError(f"studies need at least one replica, got {replicas!r}")
    return int(replicas)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        report = fn(*args, **kwargs)
        report.wall_seconds = time.perf_counter() - t0
        return report
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


# ---------------------------------------------------------------- LLN


@_timed
def lln_study(cells: Sequence[tuple], replicas: int, seed: int = K.DEFAULT_SEED, workers: int = 1,
              cache: Optional[DatasetCache] = None) -> StudyReport:
    """Mean and spread of F_N against the limiting free energy, per (beta, N) cell."""
    replicas = _check_replicas(replicas)
    out = []
    for beta, n in cells:
        p = ModelParams(beta, n)
        ds = _data(cache, p, 1.0, replicas, seed, workers)
        f = ds.f_n
        mean = _fsum_mean(f)
        sd = math.sqrt(_fsum_var(f)[0]) if f.size > 1 else 0.0
        target = limiting_free_energy(beta) if beta > 0 else LOG2
        out.append({
            "beta": float(beta), "n": int(n), "replicas": replicas, "seed": seed,
            "mean_f": mean, "sd_f": sd, "target_f": target, "gap": abs(mean - target),
            "all_log2": bool(np.all(f == LOG2)) if beta == 0 else None,
        })
    checks = {}
    for beta in sorted({c["beta"] for c in out}):
        gaps = [c["gap"] for c in sorted(out, key=lambda c: c["n"]) if c["beta"] == beta]
        if len(gaps) > 1 and beta > 0:
            checks[f"gap_decreasing_beta_{beta!r}"] = all(a > b for a, b in zip(gaps, gaps[1:]))
    return StudyReport("lln", {"cells": [[float(b), int(n)] for b, n in cells]}, out, seed, replicas, checks)


# ---------------------------------------------------------------- CLT


def clt_cell(ds: ReplicaDataset, seed: int, critical: bool) -> dict:
    p = ds.params
    s2 = -math.expm1(-p.n * p.beta ** 2)
    w = ds.w_log
    var, se = _fsum_var(w)
    ks = ks_distance(w, s2)
    cell = {
        "beta": p.beta, "n": p.n, "replicas": len(ds), "seed": seed, "target_s2": s2,
        "var_w_log": var, "se_var": se, "z_var": (var - s2) / se if se > 0 else None,
        "ks_finite": ks, "ks_half": None, "ks_one": None, "var_ok": None, "ks_ok": None,
    }
    if critical:
        cell["ks_half"] = ks_distance(w, 0.5)
        cell["ks_one"] = ks_distance(w, 1.0)
    else:
        cell["var_ok"] = bool(abs(var - s2) <= K.CLT_SE_MULT * se)
        cell["ks_ok"] = bool(ks <= K.KS_TOL.value)
    return cell


@_timed
def clt_study(beta: float, ns: Iterable[int], replicas: int, seed: int = K.DEFAULT_SEED,
              regime: Optional[Regime] = None, workers: int = 1, t: float = 1.0,
              cache: Optional[DatasetCache] = None) -> StudyReport:
    """Variance and KS fit of the log-form statistic against N(0, s_N^2).

    At the critical temperature the cells are exploratory: KS distances to
    N(0, 1/2) and N(0, 1) are reported and nothing is asserted.
    """
    replicas = _check_replicas(replicas)
    reg = resolve_regime(beta, regime)
    if reg is Regime.SUPERCRITICAL:
        raise UnsupportedRegime(f"no CLT above beta_crit = {BETA_CRIT!r}, got beta = {beta!r}")
    critical = reg is Regime.CRITICAL
    cells = [clt_cell(_data(cache, ModelParams(beta, n), t, replicas, seed, workers), seed, critical) for n in ns]
    checks = {} if critical else {
        f"n_{c['n']}": bool(c["var_ok"] and c["ks_ok"]) for c in cells}
    return StudyReport("clt", {"beta": beta, "regime": reg.name, "ns": [int(n) for n in ns]}, cells,
                       seed, replicas, checks)


# ---------------------------------------------------------------- tails


def tail_cells(ds: ReplicaDataset, xs: Iterable[float], seed: int, with_chernoff: bool = True) -> list:
    p, t = ds.params, ds.t
    s = math.sqrt(-math.expm1(-p.n * p.beta ** 2))
    spec = truncation_spec(p, t)
    t2 = t * t
    hit_freq = float(np.count_nonzero(ds.trunc_hit)) / len(ds)
    cells = []
    for x in xs:
        x = float(x)
        for side, upper in (("upper", True), ("lower", False)):
            # + 0.0 keeps the x = 0 lower threshold from printing as -0.0
            thr = x * t if upper else -x * t + 0.0
            est = tail_estimate(ds.w_log, thr, speed=t2, upper=upper)
            log_q = log_gauss_tail(x * t / s)
            bound = None
            consistent = None
            if with_chernoff and x > 0:
                bound = chernoff_bound(spec, x if upper else -x)
                if hit_freq == 0.0 and est.hits > 0:
                    # zero-hit cells are flagged by hits = 0, not judged
                    consistent = bool(bound >= math.log(est.wilson_hi) / t2)
            cells.append({
                "beta": p.beta, "n": p.n, "t": t, "x": x, "side": side, "replicas": len(ds), "seed": seed,
                "threshold": thr, "hits": est.hits, "p_hat": est.p_hat, "wilson_lo": est.wilson_lo,
                "wilson_hi": est.wilson_hi, "norm_log_p": est.norm_log_p, "gauss_q": math.exp(log_q),
                "gauss_norm_log_q": log_q / t2, "chernoff": bound, "trunc_hit_freq": hit_freq,
                "chernoff_consistent": consistent,
            })
    return cells


def _require_sub_root(schedule: ScalingSchedule, beta: float, regime):
    reg = resolve_regime(beta, regime)
    if schedule.form == "table" and len(schedule.table) == 1:
        # a single fixed t has no growth rate to classify; only the temperature is checked
        if reg is not Regime.SUBCRITICAL:
            raise UnsupportedRegime("tail studies need subcritical beta")
        return
    scaling, _ = classify_scaling(schedule, beta, reg)
    if scaling is not ScalingRegime.SUB_ROOT_N:
        raise UnsupportedRegime(f"tail studies need a sub-sqrt(N) schedule at subcritical beta, got {scaling.name}")


@_timed
def tail_study(beta: float, ns: Iterable[int], schedule: ScalingSchedule, xs: Iterable[float], replicas: int,
               seed: int = K.DEFAULT_SEED, regime: Optional[Regime] = None, workers: int = 1,
               cache: Optional[DatasetCache] = None) -> StudyReport:
    """Exceedance probabilities of the log-form statistic at x * t_N, both tails."""
    replicas = _check_replicas(replicas)
    ns = [int(n) for n in ns]
    schedule.check_grid(ns)
    _require_sub_root(schedule, beta, regime)
    xs = [float(x) for x in xs]
    cells = []
    for n in ns:
        ds = _data(cache, ModelParams(beta, n), schedule.t(n), replicas, seed, workers)
        cells.extend(tail_cells(ds, xs, seed))
    checks = {}
    for c in cells:
        if c["chernoff_consistent"] is not None:
            checks[f"chernoff_n_{c['n']}_x_{c['x']!r}_{c['side']}"] = c["chernoff_consistent"]
    return StudyReport("tail", {"beta": beta, "ns": ns, "schedule": schedule.describe(), "xs": xs}, cells,
                       seed, replicas, checks)


def gaussian_band_overlap(cell: dict, factor: float = K.TAIL_BAND_FACTOR) -> bool:
    """Does the Wilson interval meet [q / factor, factor q]?"""
    q = cell["gauss_q"]
    return intervals_overlap((cell["wilson_lo"], cell["wilson_hi"]), (q / factor, factor * q))


# ---------------------------------------------------------------- equivalence


def log_linear_violations(ds: ReplicaDataset) -> tuple:
    """Count replicas with t_dev >= -1/2 breaking |w_log - w_linear| <= w_linear^2 exp(-fluct).

    Returns (violations, eligible, max gap, 0.999-quantile of the gap, max bound).
    """
    fl = fluct_scale_log(ds.params)
    mask = ds.t_dev >= -0.5
    wl, wn = ds.w_log[mask], ds.w_linear[mask]
    gap = np.abs(wl - wn)
    bound = wn * wn * math.exp(-fl) + K.LOG_LINEAR_ROUNDING * np.abs(wn)
    eligible = int(mask.sum())
    if eligible == 0:
        return 0, 0, None, None, None
    return (int(np.count_nonzero(gap > bound)), eligible, float(gap.max()),
            float(np.quantile(gap, 0.999)), float(bound.max()))


def equivalence_cell(ds: ReplicaDataset, seed: int) -> dict:
    p, t = ds.params, ds.t
    spec = truncation_spec(p, t)
    viol, eligible, gmax, gq, bmax = log_linear_violations(ds)
    untouched = ~ds.trunc_hit
    mismatch = int(np.count_nonzero(ds.w_trunc[untouched] != ds.w_linear[untouched]))
    hits = int(np.count_nonzero(ds.trunc_hit))
    lo, hi = wilson_interval(hits, len(ds))
    exact = truncation_hit_probability(spec)
    rate = truncation_event_rate(spec)
    return {
        "beta": p.beta, "n": p.n, "t": t, "replicas": len(ds), "seed": seed, "eligible": eligible,
        "max_log_linear": gmax, "q999_log_linear": gq, "max_bound": bmax, "log_linear_violations": viol,
        "max_linear_trunc": float(np.max(np.abs(ds.w_linear - ds.w_trunc))), "trunc_mismatch": mismatch,
        "trunc_hits": hits, "trunc_freq": hits / len(ds), "trunc_wilson_lo": lo, "trunc_wilson_hi": hi,
        "trunc_exact": exact, "trunc_consistent": bool(lo <= exact <= hi),
        "rate_exact": rate.exact, "rate_predicted": rate.predicted,
    }


@_timed
def equivalence_study(beta: float, ns: Iterable[int], schedule: ScalingSchedule, replicas: int,
                      seed: int = K.DEFAULT_SEED, regime: Optional[Regime] = None, workers: int = 1,
                      cache: Optional[DatasetCache] = None) -> StudyReport:
    """Log vs linear form and linear vs truncated form, replica by replica."""
    replicas = _check_replicas(replicas)
    ns = [int(n) for n in ns]
    schedule.check_grid(ns)
    _require_sub_root(schedule, beta, regime)
    cells = [equivalence_cell(_data(cache, ModelParams(beta, n), schedule.t(n), replicas, seed, workers), seed)
             for n in ns]
    checks = {}
    for c in cells:
        checks[f"log_linear_n_{c['n']}"] = c["log_linear_violations"] == 0
        checks[f"trunc_definition_n_{c['n']}"] = c["trunc_mismatch"] == 0
        checks[f"trunc_frequency_n_{c['n']}"] = c["trunc_consistent"]
    return StudyReport("equiv", {"beta": beta, "ns": ns, "schedule": schedule.describe()}, cells,
                       seed, replicas, checks)


# ---------------------------------------------------------------- overscaling


def overscale_cells(ds: ReplicaDataset, xs: Iterable[float], seed: int) -> list:
    p = ds.params
    n = p.n
    s = math.sqrt(-math.expm1(-n * p.beta ** 2))
    speed = n ** K.OVERSCALING_SPEED_EXPONENT
    cells = []
    for x in xs:
        thr = float(x) * math.sqrt(n)
        est = tail_estimate(ds.w_log, thr, speed=speed)
        log_q = log_gauss_tail(thr / s)
        cells.append({
            "beta": p.beta, "n": n, "x": float(x), "replicas": len(ds), "seed": seed, "threshold": thr,
            "speed": speed, "hits": est.hits, "p_hat": est.p_hat, "wilson_lo": est.wilson_lo,
            "wilson_hi": est.wilson_hi, "norm_log_p": est.norm_log_p, "gauss_q": math.exp(log_q),
            "gauss_norm_log_q": log_q / speed,
        })
    return cells


@_timed
def overscaling_study(beta: float, ns: Iterable[int], replicas: int, xs: Iterable[float] = (0.0, 0.5, 1.0),
                      seed: int = K.DEFAULT_SEED, workers: int = 1, t: Optional[float] = None,
                      cache: Optional[DatasetCache] = None) -> StudyReport:
    """Tails at x sqrt(N) normalized by the representative speed N^0.8.

    ``t`` only sets the simulator's truncation level, which does not affect
    the log-form statistic; by default it is sqrt(N).
    """
    replicas = _check_replicas(replicas)
    if resolve_regime(beta) is not Regime.SUBCRITICAL:
        raise UnsupportedRegime(f"overscaling study needs beta < beta_crit, got {beta!r}")
    ns = [int(n) for n in ns]
    xs = [float(x) for x in xs]
    cells = []
    for n in ns:
        tt = math.sqrt(n) if t is None else float(t)
        cells.extend(overscale_cells(_data(cache, ModelParams(beta, n), tt, replicas, seed, workers), xs, seed))
    checks = {}
    for x in xs:
        if x <= 0:
            continue
        row = [c["norm_log_p"] for c in cells if c["x"] == x]
        if len(row) > 1 and all(v is not None for v in row):
            checks[f"decreasing_x_{x!r}"] = all(a > b for a, b in zip(row, row[1:]))
    return StudyReport("overscale", {"beta": beta, "ns": ns, "xs": xs,
                                     "speed_exponent": K.OVERSCALING_SPEED_EXPONENT},
                       cells, seed, replicas, checks)


# ---------------------------------------------------------------- LDP spot check


@_timed
def ldp_spot_check(beta: float, ns: Iterable[int], delta: float, replicas: int, seed: int = K.DEFAULT_SEED,
                   workers: int = 1, cache: Optional[DatasetCache] = None) -> StudyReport:
    """Compare -(1/N) log P(F_N >= F + delta) with the rate function (exploratory).

    The lower side P(F_N <= F - delta) is reported without a rate: it decays
    faster than any exponential in N.
    """
    replicas = _check_replicas(replicas)
    if not beta > 0:
        raise DomainError(f"LDP check needs beta > 0, got {beta!r}")
    if not delta >= 0:
        raise DomainError(f"delta must be nonnegative, got {delta!r}")
    ns = [int(n) for n in ns]
    if any(n > 16 for n in ns):
        raise DomainError("LDP spot check is restricted to N <= 16")
    F = limiting_free_energy(beta)
    theory = ldp_rate(beta, F + delta)
    cells = []
    for n in ns:
        ds = _data(cache, ModelParams(beta, n), 1.0, replicas, seed, workers)
        for side in ("upper", "lower"):
            level = F + delta if side == "upper" else F - delta
            est = tail_estimate(ds.f_n, level, upper=(side == "upper"))
            if side == "upper" and delta > 0 and est.hits:
                rate_emp = -math.log(est.p_hat) / n
                ratio = rate_emp / float(theory) if theory.is_finite and float(theory) > 0 else None
            else:
                rate_emp, ratio = None, None
            cells.append({
                "beta": float(beta), "n": n, "delta": float(delta), "side": side, "replicas": replicas,
                "seed": seed, "level": level, "hits": est.hits, "p_hat": est.p_hat,
                "wilson_lo": est.wilson_lo, "wilson_hi": est.wilson_hi, "rate_emp": _finite(rate_emp),
                "rate_theory": _finite(float(theory)) if side == "upper" else None, "ratio": _finite(ratio),
                "ratio_ok": (None if ratio is None
                             else bool(1 / K.LDP_RATIO_BAND <= ratio <= K.LDP_RATIO_BAND)),
            })
    checks = {}
    usable = [c for c in cells if c["side"] == "upper" and c["ratio"] is not None and c["hits"] >= K.LDP_MIN_HITS]
    if usable:
        checks["ratio_within_band_at_largest_n"] = max(usable, key=lambda c: c["n"])["ratio_ok"]
    return StudyReport("ldp", {"beta": beta, "ns": ns, "delta": delta}, cells, seed, replicas, checks)
