"""Command-line front end.

    remlab <subcommand> [--config FILE] [flags]

Flags override values from the JSON config file.  Every run writes its
tables and a ``manifest.json`` (full config, tool version, wall time and a
SHA-256 per output file).  Files are staged in a scratch directory and moved
into place only when the whole run succeeded.

Exit status: 0 success, 2 invalid configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass
from typing import Callable, Optional

from remlab import __version__
from remlab import constants as K
from remlab.errors import ConfigError, DomainError, NumericalFailure, UnsupportedRegime
from remlab.experiments import (
    clt_study, equivalence_study, format_value, ldp_spot_check, lln_study, overscaling_study, tail_study,
)
from remlab.moments import (
    chernoff_bound, finite_scgf, scgf_increment, truncated_moments, truncation_event_rate, truncation_spec,
)
from remlab.rng import RngSpec
from remlab.simulator import MAX_N, run_replicas
from remlab.theory import (
    BETA_CRIT, ModelParams, Regime, ScalingRegime, ScalingSchedule, annealed_free_energy, classify_scaling,
    ldp_rate, limiting_free_energy, resolve_regime, scgf_limit,
)

log = logging.getLogger("remlab")

SUBCOMMANDS = ("theory", "moments", "scgf", "simulate", "lln", "clt", "tails", "equiv", "overscale", "ldp-check")
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    beta: tuple = (0.3,)
    regime: Optional[str] = None
    n_grid: tuple = (16,)
    schedule: Optional[str] = None
    t: Optional[float] = None
    replicas: int = 1000
    seed: int = K.DEFAULT_SEED
    workers: int = 1
    out: str = "remlab-out"
    format: tuple = FORMATS
    x_grid: tuple = (0.0, 1.0)
    delta: float = 0.3
    lambda_grid: tuple = (-2.0, -1.0, 1.0, 2.0)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


_FIELDS = set(RunConfig.__dataclass_fields__) - {"subcommand"}


# ---------------------------------------------------------------- validation


def _floats(field, value, allow_empty=False):
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a number or a list of numbers, got {value!r}") from None
    if not out and not allow_empty:
        raise ConfigError(field, "must not be empty")
    if any(not math.isfinite(v) for v in out):
        raise ConfigError(field, "values must be finite")
    return out


def _ints(field, value):
    vals = _floats(field, value)
    if any(v != int(v) for v in vals):
        raise ConfigError(field, f"expected integers, got {value!r}")
    return tuple(int(v) for v in vals)


def _int(field, value, lo):
    if isinstance(value, bool):
        raise ConfigError(field, f"expected an integer, got {value!r}")
    try:
        iv = int(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected an integer, got {value!r}") from None
    if isinstance(value, float) and value != iv:
        raise ConfigError(field, f"expected an integer, got {value!r}")
    if iv < lo:
        raise ConfigError(field, f"must be >= {lo}, got {iv}")
    return iv


def normalize(raw: dict) -> RunConfig:
    """Validate raw values field by field; every error names its field."""
    unknown = set(raw) - _FIELDS - {"subcommand"}
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(name, "unknown configuration field")
    sub = raw.get("subcommand")
    if sub not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {', '.join(SUBCOMMANDS)}, got {sub!r}")
    cfg = {"subcommand": sub}
    if "beta" in raw:
        cfg["beta"] = _floats("beta", raw["beta"])
        if any(b < 0 for b in cfg["beta"]):
            raise ConfigError("beta", "must be >= 0")
    if raw.get("regime") is not None:
        r = str(raw["regime"]).upper()
        if r not in Regime.__members__:
            raise ConfigError("regime", f"must be SUBCRITICAL, CRITICAL or SUPERCRITICAL, got {raw['regime']!r}")
        cfg["regime"] = r
    if "n_grid" in raw:
        cfg["n_grid"] = _ints("n_grid", raw["n_grid"])
        if any(n < 1 for n in cfg["n_grid"]):
            raise ConfigError("n_grid", "N must be >= 1")
    if raw.get("schedule") is not None:
        try:
            ScalingSchedule.parse(str(raw["schedule"]))
        except ValueError as exc:
            raise ConfigError("schedule", str(exc)) from None
        cfg["schedule"] = str(raw["schedule"])
    if raw.get("t") is not None:
        (t,) = _floats("t", raw["t"])
        if not t > 0:
            raise ConfigError("t", "must be > 0")
        cfg["t"] = t
    if "replicas" in raw:
        cfg["replicas"] = _int("replicas", raw["replicas"], 0)
    if "seed" in raw:
        cfg["seed"] = _int("seed", raw["seed"], 0)
        if cfg["seed"] >= 2 ** 64:
            raise ConfigError("seed", "must fit in 64 unsigned bits")
    if "workers" in raw:
        cfg["workers"] = _int("workers", raw["workers"], 1)
    if "out" in raw:
        if not isinstance(raw["out"], str) or not raw["out"]:
            raise ConfigError("out", "must be a nonempty path")
        cfg["out"] = raw["out"]
    if "format" in raw:
        fmts = raw["format"]
        if isinstance(fmts, str):
            fmts = [f.strip() for f in fmts.split(",") if f.strip()]
        if not fmts or any(f not in FORMATS for f in fmts):
            raise ConfigError("format", f"choose from {', '.join(FORMATS)}, got {raw['format']!r}")
        cfg["format"] = tuple(f for f in FORMATS if f in fmts)
    if "x_grid" in raw:
        cfg["x_grid"] = _floats("x_grid", raw["x_grid"])
        if any(x < 0 for x in cfg["x_grid"]):
            raise ConfigError("x_grid", "must be >= 0")
    if "delta" in raw:
        (d,) = _floats("delta", raw["delta"])
        if d < 0:
            raise ConfigError("delta", "must be >= 0")
        cfg["delta"] = d
    if "lambda_grid" in raw:
        cfg["lambda_grid"] = _floats("lambda_grid", raw["lambda_grid"])
        if any(abs(v) > 64 for v in cfg["lambda_grid"]):
            raise ConfigError("lambda_grid", "|lambda| must be <= 64")
    return RunConfig(**cfg)


def _regime(cfg: RunConfig) -> Optional[Regime]:
    return Regime[cfg.regime] if cfg.regime else None


def _schedule(cfg: RunConfig, default: Optional[str] = None) -> ScalingSchedule:
    if cfg.t is not None:
        return ScalingSchedule("table", table=tuple((n, cfg.t) for n in cfg.n_grid[:1]))
    text = cfg.schedule or default
    if text is None:
        raise ConfigError("schedule", "this subcommand needs --schedule or --t")
    return ScalingSchedule.parse(text)


def _t_of(cfg: RunConfig, n: int, default: Optional[str] = None) -> float:
    if cfg.t is not None:
        return cfg.t
    return _schedule(cfg, default).t(n)


def _single(cfg: RunConfig, field: str):
    vals = getattr(cfg, field)
    if len(vals) != 1:
        raise ConfigError(field, f"{cfg.subcommand} takes a single value, got {list(vals)}")
    return vals[0]


def _guard_sim(cfg: RunConfig):
    if any(n > MAX_N for n in cfg.n_grid):
        raise ConfigError("n_grid", f"simulation needs N <= {MAX_N}")


def _need_positive_beta(cfg: RunConfig):
    if any(b <= 0 for b in cfg.beta):
        raise ConfigError("beta", f"{cfg.subcommand} needs beta > 0")


def _as_config_error(field: str, fn: Callable):
    try:
        return fn()
    except ConfigError:
        raise
    except (DomainError, UnsupportedRegime) as exc:
        raise ConfigError(field, str(exc)) from None


# ---------------------------------------------------------------- tables


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row[c]) for c in columns])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _tables(cfg: RunConfig, name: str, columns, rows) -> dict:
    out = {}
    if "csv" in cfg.format:
        out[f"{name}.csv"] = csv_text(columns, rows)
    if "json" in cfg.format:
        out[f"{name}.json"] = json_text({"columns": list(columns), "rows": rows})
    return out


def _ext(v) -> Optional[float]:
    f = float(v)
    return f if math.isfinite(f) else None


# ---------------------------------------------------------------- subcommands
# Each planner validates and returns a thunk producing {filename: text}.


def plan_theory(cfg: RunConfig):
    _need_positive_beta(cfg)
    regime = _regime(cfg)
    regimes = {}
    for b in cfg.beta:
        r = regime if regime is not None and abs(b - BETA_CRIT) <= 1e-12 else None
        regimes[b] = _as_config_error("beta", lambda: resolve_regime(b, r))

    def run():
        rows = [{"beta": b, "F": limiting_free_energy(b), "F_annealed": annealed_free_energy(b)} for b in cfg.beta]
        files = _tables(cfg, "theory", ("beta", "F", "F_annealed"), rows)
        rates = []
        for b in cfg.beta:
            F = limiting_free_energy(b)
            for d in cfg.x_grid + tuple(-x for x in cfg.x_grid if x > 0):
                rates.append({"beta": b, "delta": d, "x": F + d, "I": _ext(ldp_rate(b, F + d))})
        files.update(_tables(cfg, "ldp_rate", ("beta", "delta", "x", "I"), rates))
        lam_rows = []
        for b in cfg.beta:
            if regimes[b] is Regime.SUPERCRITICAL:
                continue
            fn = scgf_limit(b, regimes[b])
            lam_rows += [{"beta": b, "regime": regimes[b].name, "lambda": lam, "scgf": fn(lam)}
                         for lam in cfg.lambda_grid]
        files.update(_tables(cfg, "scgf_limit", ("beta", "regime", "lambda", "scgf"), lam_rows))
        return files

    return run


def plan_moments(cfg: RunConfig):
    _need_positive_beta(cfg)
    sched = _as_config_error("schedule", lambda: _schedule(cfg, "power:0.25:1"))
    _as_config_error("n_grid", lambda: [sched.t(n) for n in cfg.n_grid])
    cols = ("beta", "n", "t", "c", "m1", "m2", "m3abs", "m1_scaled", "m3_scaled", "s2", "method",
            "fallback", "rate_exact", "rate_predicted")

    def run():
        rows = []
        for b in cfg.beta:
            for n in cfg.n_grid:
                spec = truncation_spec(ModelParams(b, n), _t_of(cfg, n, "power:0.25:1"))
                rep = truncated_moments(spec)
                rate = truncation_event_rate(spec)
                rows.append({"beta": b, "n": n, "t": spec.t, "c": spec.c, "m1": rep.m1, "m2": rep.m2,
                             "m3abs": rep.m3abs, "m1_scaled": rep.m1_scaled, "m3_scaled": rep.m3_scaled,
                             "s2": rep.s2, "method": rep.method, "fallback": rep.fallback,
                             "rate_exact": rate.exact, "rate_predicted": rate.predicted})
        return _tables(cfg, "moments", cols, rows)

    return run


def plan_scgf(cfg: RunConfig):
    _need_positive_beta(cfg)
    sched = _as_config_error("schedule", lambda: _schedule(cfg, "power:0.3:1"))
    _as_config_error("n_grid", lambda: [sched.t(n) for n in cfg.n_grid])
    if any(n > 1000 for n in cfg.n_grid):
        raise ConfigError("n_grid", "SCGF sweeps need N <= 1000 (2^N must stay a finite double)")
    regime = _regime(cfg)
    limits = {}
    for b in cfg.beta:
        reg = _as_config_error("beta", lambda: resolve_regime(b, regime if abs(b - BETA_CRIT) <= 1e-12 else None))
        limits[b] = None if reg is Regime.SUPERCRITICAL else scgf_limit(b, reg)

    def run():
        rows, chern = [], []
        for b in cfg.beta:
            for n in cfg.n_grid:
                spec = truncation_spec(ModelParams(b, n), _t_of(cfg, n, "power:0.3:1"))
                for lam in cfg.lambda_grid:
                    inc = scgf_increment(spec, lam)
                    lim = limits[b](lam) if limits[b] else None
                    rows.append({"beta": b, "n": n, "t": spec.t, "lambda": lam, "increment": inc,
                                 "finite_scgf": finite_scgf(spec, lam), "limit": lim,
                                 "abs_gap": abs(inc - lim) if lim is not None else None})
                for x in cfg.x_grid:
                    for sx in ((x, -x) if x > 0 else (x,)):
                        chern.append({"beta": b, "n": n, "t": spec.t, "x": sx, "bound": chernoff_bound(spec, sx),
                                      "gauss": -sx * sx / 2.0})
        files = _tables(cfg, "scgf", ("beta", "n", "t", "lambda", "increment", "finite_scgf", "limit", "abs_gap"),
                        rows)
        files.update(_tables(cfg, "chernoff", ("beta", "n", "t", "x", "bound", "gauss"), chern))
        return files

    return run


def plan_simulate(cfg: RunConfig):
    _guard_sim(cfg)
    beta = _single(cfg, "beta")
    n = _single(cfg, "n_grid")
    p = _as_config_error("beta", lambda: ModelParams(beta, n))
    t = _as_config_error("schedule", lambda: _t_of(cfg, n, "power:0.25:1"))

    def run():
        ds = run_replicas(p, t, cfg.replicas, RngSpec(cfg.seed), cfg.workers)
        files = {}
        if "csv" in cfg.format:
            files["replicas.csv"] = ds.to_csv()
        if "json" in cfg.format:
            summ = {k: {"mean": s.mean, "variance": s.variance, "count": s.count}
                    for k, s in ds.summaries().items()}
            files["summary.json"] = json_text({"beta": beta, "n": n, "t": t, "replicas": cfg.replicas,
                                               "seed": cfg.seed, "summaries": summ})
        return files

    return run


def _study_files(cfg: RunConfig, report) -> dict:
    files = {}
    if "csv" in cfg.format:
        files[f"{report.kind}.csv"] = report.to_csv()
    if "json" in cfg.format:
        files[f"{report.kind}.json"] = report.to_json()
    return files


def _study_replicas(cfg: RunConfig):
    if cfg.replicas < 1:
        raise ConfigError("replicas", f"{cfg.subcommand} needs at least one replica")


def plan_lln(cfg: RunConfig):
    _guard_sim(cfg)
    _study_replicas(cfg)
    cells = [(b, n) for b in cfg.beta for n in cfg.n_grid]
    return lambda: _study_files(cfg, lln_study(cells, cfg.replicas, cfg.seed, cfg.workers))


def plan_clt(cfg: RunConfig):
    _guard_sim(cfg)
    _study_replicas(cfg)
    beta = _single(cfg, "beta")
    reg = _as_config_error("beta", lambda: resolve_regime(beta, _regime(cfg)))
    if reg is Regime.SUPERCRITICAL:
        raise ConfigError("beta", "the CLT study needs beta <= beta_crit")
    return lambda: _study_files(cfg, clt_study(beta, cfg.n_grid, cfg.replicas, cfg.seed, reg, cfg.workers))


def _sub_root_plan(cfg: RunConfig):
    _guard_sim(cfg)
    _study_replicas(cfg)
    beta = _single(cfg, "beta")
    if cfg.t is not None and len(cfg.n_grid) != 1:
        raise ConfigError("t", "a fixed t applies to a single N; use --schedule for a grid")
    sched = _as_config_error("schedule", lambda: _schedule(cfg, "power:0.25:1"))
    _as_config_error("schedule", lambda: sched.check_grid(cfg.n_grid))
    reg = _as_config_error("beta", lambda: resolve_regime(beta, _regime(cfg)))
    if reg is not Regime.SUBCRITICAL:
        raise ConfigError("beta", "tail and equivalence studies need subcritical beta")
    if sched.form != "table":
        scaling, _ = classify_scaling(sched, beta, reg)
        if scaling is not ScalingRegime.SUB_ROOT_N:
            raise ConfigError("schedule", f"needs a sub-sqrt(N) schedule, got {scaling.name}")
    return beta, sched, reg


def plan_tails(cfg: RunConfig):
    beta, sched, reg = _sub_root_plan(cfg)
    return lambda: _study_files(cfg, tail_study(beta, cfg.n_grid, sched, cfg.x_grid, cfg.replicas, cfg.seed,
                                                reg, cfg.workers))


def plan_equiv(cfg: RunConfig):
    beta, sched, reg = _sub_root_plan(cfg)
    return lambda: _study_files(cfg, equivalence_study(beta, cfg.n_grid, sched, cfg.replicas, cfg.seed, reg,
                                                       cfg.workers))


def plan_overscale(cfg: RunConfig):
    _guard_sim(cfg)
    _study_replicas(cfg)
    beta = _single(cfg, "beta")
    reg = _as_config_error("beta", lambda: resolve_regime(beta, _regime(cfg)))
    if reg is not Regime.SUBCRITICAL:
        raise ConfigError("beta", "the overscaling study needs beta < beta_crit")
    xs = cfg.x_grid
    return lambda: _study_files(cfg, overscaling_study(beta, cfg.n_grid, cfg.replicas, xs, cfg.seed, cfg.workers,
                                                       cfg.t))


def plan_ldp(cfg: RunConfig):
    _study_replicas(cfg)
    _need_positive_beta(cfg)
    beta = _single(cfg, "beta")
    if any(n > 16 for n in cfg.n_grid):
        raise ConfigError("n_grid", "the LDP spot check is limited to N <= 16")
    return lambda: _study_files(cfg, ldp_spot_check(beta, cfg.n_grid, cfg.delta, cfg.replicas, cfg.seed,
                                                    cfg.workers))


PLANNERS = {
    "theory": plan_theory, "moments": plan_moments, "scgf": plan_scgf, "simulate": plan_simulate,
    "lln": plan_lln, "clt": plan_clt, "tails": plan_tails, "equiv": plan_equiv, "overscale": plan_overscale,
    "ldp-check": plan_ldp,
}


# ---------------------------------------------------------------- output


def _write_atomic(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def execute(cfg: RunConfig) -> dict:
    """Validate, compute and publish; returns the manifest."""
    run = PLANNERS[cfg.subcommand](cfg)
    os.makedirs(cfg.out, exist_ok=True)
    stage = tempfile.mkdtemp(dir=cfg.out, prefix=".partial-")
    try:
        t0 = time.perf_counter()
        files = run()
        wall = time.perf_counter() - t0
        for name, text in files.items():
            _write_atomic(os.path.join(stage, name), text)
        manifest = {
            "tool": "remlab", "tool_version": __version__, "constants_version": K.VERSION,
            "config": cfg.to_json_dict(), "seed": cfg.seed, "wall_seconds": wall,
            "files": {name: sha256(text) for name, text in sorted(files.items())},
        }
        _write_atomic(os.path.join(stage, "manifest.json"), json_text(manifest))
        for name in list(files) + ["manifest.json"]:
            os.replace(os.path.join(stage, name), os.path.join(cfg.out, name))
        return manifest
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# ---------------------------------------------------------------- argv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="remlab", description="Random energy model fluctuation toolkit.")
    parser.add_argument("--version", action="version", version=f"remlab {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = subs.add_parser(name)
        p.add_argument("--config", help="JSON file with configuration fields")
        p.add_argument("--beta", help="inverse temperature(s), comma separated")
        p.add_argument("--regime", help="SUBCRITICAL, CRITICAL or SUPERCRITICAL")
        p.add_argument("--n-grid", dest="n_grid", help="system sizes, comma separated")
        p.add_argument("--schedule", help="power:<alpha>:<coef> or logpower:<alpha>:<coef>")
        p.add_argument("--t", type=str, help="fixed truncation scale t (single N only)")
        p.add_argument("--replicas")
        p.add_argument("--seed")
        p.add_argument("--workers")
        p.add_argument("--out")
        p.add_argument("--format", help="csv,json")
        p.add_argument("--x-grid", dest="x_grid")
        p.add_argument("--delta")
        p.add_argument("--lambda-grid", dest="lambda_grid")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config", "top level must be an object")
        raw = {k.replace("-", "_"): v for k, v in raw.items()}
        raw.pop("subcommand", None)
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            raw[name] = v
    raw["subcommand"] = args.subcommand
    return normalize(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args)
        manifest = execute(cfg)
    except ConfigError as exc:
        print(f"remlab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (DomainError, UnsupportedRegime) as exc:
        print(f"remlab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"remlab: numerical failure: {exc}", file=sys.stderr)
        return 3
    log.info("wrote %s to %s", ", ".join(manifest["files"]), cfg.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
