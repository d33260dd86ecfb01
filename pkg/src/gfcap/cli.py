"""Batch command-line front end.

Commands::

    gfcap capacity --k 2 --alphas 0.1;0.1 --betas 0;0 --P 1 --method all
    gfcap sweep --preset A --steps 100 --out a.csv
    gfcap sweep --param alpha1 --start -0.9 --stop 0.9 --steps 19 --k 2 ...
    gfcap verify cert.txt [--alphas ... --betas ... --P ...]
    gfcap oracle --k 1 --alphas 0 --betas -0.5 --P 1 --n 8,16,32

Every command also accepts ``--config FILE`` holding ``key=value`` lines
whose keys are the long option names (``alphas``, ``P``, ``method``, ...);
flags given on the command line override the file.

Exit codes: 0 success, 1 usage or parse error, 2 numerical failure or a
failed verification.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import certfile
from .arma1 import arma1_quartic, solve_arma1
from .certsolve import multi_start_solve, verify_certificate
from .iterate import IterateOptions, kkt_residual, run as iterate_run
from .nblock import MAX_N, NBlockOptions, nblock_lower_bound
from .quadrature import FrequencyGrid, default_grid_size, filter_power_exact, waterfill_capacity
from .spectra import ArmaModel

__all__ = [
    "CAPACITY_COLUMNS",
    "SWEEP_COLUMNS",
    "METHODS",
    "RunConfig",
    "UsageError",
    "cmd_capacity",
    "cmd_sweep",
    "cmd_verify",
    "cmd_oracle",
    "main",
]

CAPACITY_COLUMNS = (
    "method",
    "k",
    "alphas",
    "betas",
    "P",
    "capacity",
    "units",
    "status",
    "max_residual",
    "seconds",
)
SWEEP_COLUMNS = (
    "sweep_param",
    "sweep_value",
    "series",
    "method",
    "capacity",
    "units",
    "status",
    "max_residual",
)
ORACLE_COLUMNS = ("n", "capacity", "units", "power")
METHODS = ("arma1", "cert", "iterate", "nblock", "waterfill")
# methods whose values estimate the feedback capacity itself (bounds excluded)
EXACT_METHODS = ("arma1", "cert", "iterate")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(ValueError):
    """Bad parameters or unreadable input (exit code 1)."""


@dataclass(frozen=True)
class RunConfig:
    command: str = "capacity"
    k: int | None = None
    alphas: tuple = ()
    betas: tuple = ()
    P: float = 1.0
    method: str = "all"
    grid_n: int = field(default_factory=default_grid_size)
    seed: int = 0
    units: str = "nats"
    timing: bool = True
    budget: int = 24
    horizon: int = 32
    workers: int = 1
    cert_out: str | None = None
    out: str | None = None
    preset: str | None = None
    param: str | None = None
    start: float | None = None
    stop: float | None = None
    steps: int = 100

    def __post_init__(self):
        if self.units not in ("nats", "bits"):
            raise UsageError("units must be nats or bits")
        if self.steps < 1:
            raise UsageError("steps must be at least 1")
        if self.grid_n < 16:
            raise UsageError("grid must have at least 16 points")
        if self.budget < 1:
            raise UsageError("budget must be at least 1")
        if self.workers < 1:
            raise UsageError("workers must be at least 1")
        if not (self.P > 0 and math.isfinite(self.P)):
            raise UsageError("P must be positive")

    def model(self):
        if self.k is not None and (len(self.alphas) != self.k or len(self.betas) != self.k):
            raise UsageError("alphas and betas must each have k entries")
        try:
            return ArmaModel(tuple(self.alphas), tuple(self.betas))
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def convert(self, nats):
        return nats / math.log(2) if self.units == "bits" else nats


# --------------------------------------------------------------------------
# formatting


def fmt_num(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def fmt_list(values):
    return ";".join(repr(float(v)) for v in values)


def _write_csv(rows, columns, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([row.get(c, "") for c in columns])


# --------------------------------------------------------------------------
# single-method evaluation


@dataclass
class MethodResult:
    method: str
    capacity: float | None
    status: str
    max_residual: float | None = None
    seconds: float = 0.0
    certificate: object = None


def _run_arma1(cfg, model):
    if model.k != 1:
        return MethodResult("arma1", None, "not applicable")
    a, b = model.alphas[0], model.betas[0]
    sol = solve_arma1(cfg.P, a, b)
    return MethodResult("arma1", sol.capacity_nats, "ok", abs(arma1_quartic(sol.x, cfg.P, a, b)))


def _run_cert(cfg, model, extra_starts=()):
    grid = FrequencyGrid(cfg.grid_n)
    found = multi_start_solve(
        model,
        cfg.P,
        budget=cfg.budget,
        seed=cfg.seed,
        grid=grid,
        extra_starts=extra_starts,
        exhaustive=False,
    )
    if not found:
        return MethodResult("cert", None, "no certificate found")
    best = found[0]
    return MethodResult(
        "cert", best.capacity, "ok", best.residual_report["max_residual"], certificate=best
    )


def _run_iterate(cfg, model):
    opts = IterateOptions(grid_n=cfg.grid_n, seed=cfg.seed)
    cap, filt, trace = iterate_run(model, cfg.P, opts)
    _, resid, _ = kkt_residual(filt, model, FrequencyGrid(cfg.grid_n))
    power_gap = abs(filter_power_exact(filt) - cfg.P)
    status = "ok" if trace.converged else "max iterations"
    return MethodResult("iterate", cap, status, max(resid, power_gap))


def _run_nblock(cfg, model):
    n = cfg.horizon
    rate, state = nblock_lower_bound(model, cfg.P, n, NBlockOptions(seed=cfg.seed))
    return MethodResult("nblock", rate, f"lower bound n={n}", abs(state.power - cfg.P))


def _run_waterfill(cfg, model):
    cap = waterfill_capacity(model, cfg.P, FrequencyGrid(max(cfg.grid_n, 4096)))
    return MethodResult("waterfill", cap, "ok", None)


RUNNERS = {
    "arma1": _run_arma1,
    "cert": _run_cert,
    "iterate": _run_iterate,
    "nblock": _run_nblock,
    "waterfill": _run_waterfill,
}


def run_method(cfg, model, method, **kwargs):
    """Evaluate one method, turning numerical failures into a status."""
    t0 = time.perf_counter()
    try:
        res = RUNNERS[method](cfg, model, **kwargs)
    except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        res = MethodResult(method, None, f"error: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


def _methods_for(cfg, model):
    if cfg.method == "all":
        return [m for m in METHODS if m != "arma1" or model.k == 1]
    names = [m.strip() for m in cfg.method.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise UsageError(f"unknown method {','.join(bad) or cfg.method!r}")
    return names


# --------------------------------------------------------------------------
# commands


def cmd_capacity(cfg, out=None):
    """One CSV row per method on ``out``; returns the exit status."""
    out = out or sys.stdout
    model = cfg.model()
    methods = _methods_for(cfg, model)
    results = [run_method(cfg, model, m) for m in methods]
    columns = CAPACITY_COLUMNS + (("max_gap",) if cfg.method == "all" else ())
    exact = [r.capacity for r in results if r.method in EXACT_METHODS and r.capacity is not None]
    gap = max((abs(a - b) for a, b in itertools.combinations(exact, 2)), default=0.0)
    rows = []
    for r in results:
        rows.append(
            {
                "method": r.method,
                "k": model.k,
                "alphas": fmt_list(model.alphas),
                "betas": fmt_list(model.betas),
                "P": fmt_num(cfg.P),
                "capacity": fmt_num(None if r.capacity is None else cfg.convert(r.capacity)),
                "units": cfg.units,
                "status": r.status,
                "max_residual": fmt_num(r.max_residual),
                "seconds": f"{r.seconds:.3f}" if cfg.timing else "",
                "max_gap": fmt_num(cfg.convert(gap)),
            }
        )
    _write_csv(rows, columns, out)
    if cfg.cert_out:
        cert = next((r.certificate for r in results if r.certificate is not None), None)
        if cert is None:
            print("no certificate to write", file=sys.stderr)
            return EXIT_NUMERIC
        with open(cfg.cert_out, "w") as fh:
            fh.write(certfile.dump_certificate(cert, model, cfg.P))
    if any(r.status.startswith("error") for r in results):
        return EXIT_NUMERIC
    return EXIT_OK


SWEEP_GRID = (-0.9, 0.9)
PRESETS = {
    # fixed P=1, alpha2=0.1, beta2=0; alpha1 swept for several beta1
    "A": {
        "k": 2,
        "P": 1.0,
        "param": "alpha1",
        "series_param": "beta1",
        "series": (-0.5, 0.0, 0.5),
        "alphas": (0.0, 0.1),
        "betas": (0.0, 0.0),
        "methods": ("cert", "iterate", "waterfill"),
    },
    # fixed P=10, alpha=(0.3,0.4,.), beta=(-0.3,0.7,.); beta3 swept for several alpha3
    "B": {
        "k": 3,
        "P": 10.0,
        "param": "beta3",
        "series_param": "alpha3",
        "series": (-0.5, 0.0, 0.5),
        "alphas": (0.3, 0.4, 0.0),
        "betas": (-0.3, 0.7, 0.0),
        "methods": ("iterate", "waterfill"),
    },
}
WHITE_ANCHOR = {"alphas": (0.1, 0.1), "betas": (0.1, 0.1)}


def _slot(param):
    """``'alpha2' -> ('alphas', 1)``, ``'P' -> ('P', None)``."""
    if param == "P":
        return "P", None
    for prefix, key in (("alpha", "alphas"), ("beta", "betas")):
        if param.startswith(prefix) and param[len(prefix) :].isdigit():
            idx = int(param[len(prefix) :]) - 1
            if idx < 0:
                break
            return key, idx
    raise UsageError(f"unknown sweep parameter {param!r}")


def _assign(alphas, betas, P, param, value):
    key, idx = _slot(param)
    alphas, betas = list(alphas), list(betas)
    if key == "P":
        return alphas, betas, value
    target = alphas if key == "alphas" else betas
    if idx >= len(target):
        raise UsageError(f"{param} is not a slot of a k={len(target)} model")
    target[idx] = value
    return alphas, betas, P


@dataclass(frozen=True)
class SweepJob:
    """One series: a list of points evaluated in order with warm starts."""

    label: str
    param: str
    points: tuple  # (value, alphas, betas, P)
    methods: tuple
    cfg: RunConfig


def _sweep_values(start, stop, steps):
    if steps == 1:
        return [float(start)]
    return [float(v) for v in np.linspace(start, stop, steps)]


def _build_jobs(cfg):
    if cfg.preset:
        name = cfg.preset.upper()
        if name not in PRESETS:
            raise UsageError(f"unknown preset {cfg.preset!r}")
        spec = PRESETS[name]
        lo, hi = SWEEP_GRID
        start = lo if cfg.start is None else cfg.start
        stop = hi if cfg.stop is None else cfg.stop
        methods = (
            tuple(spec["methods"]) if cfg.method == "all" else tuple(_methods_for(cfg, None))
        )
        jobs = []
        for sv in spec["series"]:
            a, b, P = _assign(spec["alphas"], spec["betas"], spec["P"], spec["series_param"], sv)
            pts = []
            for v in _sweep_values(start, stop, cfg.steps):
                pa, pb, pP = _assign(a, b, P, spec["param"], v)
                pts.append((v, tuple(pa), tuple(pb), pP))
            jobs.append(SweepJob(f"{spec['series_param']}={sv!r}", spec["param"], tuple(pts), methods, cfg))
        if name == "A":
            anchor = (math.nan, WHITE_ANCHOR["alphas"], WHITE_ANCHOR["betas"], spec["P"])
            jobs.append(SweepJob("white_anchor", spec["param"], (anchor,), methods, cfg))
        return jobs
    if cfg.param is None or cfg.start is None or cfg.stop is None:
        raise UsageError("sweep needs --preset or --param/--start/--stop")
    base = cfg.model()
    _slot(cfg.param)
    methods = tuple(_methods_for(cfg, base))
    if cfg.method == "all":
        methods = tuple(m for m in methods if m != "nblock")
    pts = []
    for v in _sweep_values(cfg.start, cfg.stop, cfg.steps):
        pa, pb, pP = _assign(base.alphas, base.betas, cfg.P, cfg.param, v)
        pts.append((v, tuple(pa), tuple(pb), pP))
    return [SweepJob("custom", cfg.param, tuple(pts), methods, cfg)]


def run_sweep_job(job):
    """Evaluate a series in order; certificates warm-start the next point."""
    rows = []
    prev_cert = None
    for value, alphas, betas, P in job.points:
        cfg = replace(job.cfg, P=P)
        try:
            model = ArmaModel(alphas, betas)
        except ValueError as exc:
            for m in job.methods:
                rows.append(_sweep_row(job, value, m, None, f"error: {exc}", None))
            continue
        for m in job.methods:
            if m == "arma1" and model.k != 1:
                continue
            kwargs = {}
            if m == "cert" and prev_cert is not None:
                kwargs["extra_starts"] = ((prev_cert.x, prev_cert.y),)
            res = run_method(cfg, model, m, **kwargs)
            if m == "cert":
                prev_cert = res.certificate
            cap = None if res.capacity is None else cfg.convert(res.capacity)
            rows.append(_sweep_row(job, value, m, cap, res.status, res.max_residual))
    return rows


def _sweep_row(job, value, method, cap, status, resid):
    return {
        "sweep_param": job.param,
        "sweep_value": fmt_num(value),
        "series": job.label,
        "method": method,
        "capacity": fmt_num(cap),
        "units": job.cfg.units,
        "status": status,
        "max_residual": fmt_num(resid),
    }


def cmd_sweep(cfg, out=None):
    """Write the sweep CSV to ``cfg.out`` (or ``out``); returns the exit status."""
    jobs = _build_jobs(cfg)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as pool:
            chunks = list(pool.map(run_sweep_job, jobs))
    else:
        chunks = [run_sweep_job(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            _write_csv(rows, SWEEP_COLUMNS, fh)
    else:
        _write_csv(rows, SWEEP_COLUMNS, out or sys.stdout)
    return EXIT_OK


CONDITIONS = (
    ("i power", ("power_residual",)),
    ("ii zeros and outer roots", ("feasible", "root_residual", "outer_root_residual", "conj_closure")),
    ("iii orthogonality", ("orthogonality_residual", "lambda_positive")),
    ("iv output spectrum", ("output_spectrum",)),
    ("identity spectrum", ("output_spectrum_mismatch",)),
    ("identity jensen", ("jensen_residual",)),
)


def cmd_verify(path, cfg, out=None, tol=1e-8, use_model=None, use_P=None):
    """Check a certificate file; PASS/FAIL per condition, exit 0 iff all pass."""
    out = out or sys.stdout
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    try:
        cert, model, P = certfile.load_certificate(text)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if use_model if use_model is not None else bool(cfg.alphas or cfg.betas):
        model = cfg.model()
    if use_P or (use_P is None and P is None):
        P = cfg.P
    if model is None or P is None:
        raise UsageError("model and P must come from the file or the command line")
    try:
        rep = verify_certificate(model, P, cert, FrequencyGrid(cfg.grid_n), tol=tol)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"FAIL numerical error: {exc}", file=out)
        return EXIT_NUMERIC
    checks = rep["checks"]
    for name, keys in CONDITIONS:
        present = [k for k in keys if k in checks]
        ok = bool(present) and all(checks[k] for k in present)
        resid = [rep[k] for k in keys if isinstance(rep.get(k), float)]
        detail = f" residual={max(resid):.3e}" if resid else ""
        print(f"{'PASS' if ok else 'FAIL'} {name}{detail}", file=out)
    if rep["pass"]:
        print(f"capacity={fmt_num(cfg.convert(rep['capacity']))} {cfg.units}", file=out)
    print("PASS" if rep["pass"] else "FAIL", file=out)
    return EXIT_OK if rep["pass"] else EXIT_NUMERIC


def cmd_oracle(cfg, horizons, out=None):
    """n-block lower bounds for each horizon, as CSV."""
    out = out or sys.stdout
    model = cfg.model()
    rows = []
    for n in horizons:
        try:
            rate, state = nblock_lower_bound(model, cfg.P, n, NBlockOptions(seed=cfg.seed))
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            print(f"n={n}: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        rows.append(
            {"n": n, "capacity": fmt_num(cfg.convert(rate)), "units": cfg.units, "power": fmt_num(state.power)}
        )
    _write_csv(rows, ORACLE_COLUMNS, out)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument handling


def _floats(text):
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.replace(",", ";").split(";") if v.strip())
    except ValueError:
        raise UsageError(f"not a list of numbers: {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise UsageError(f"not a list of integers: {text!r}") from None


def read_config_file(path):
    """``key=value`` lines (``#`` comments) as a dict of strings."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _ArgumentParser(prog="gfcap", description="Feedback capacity of ARMA Gaussian channels.")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--k", type=int)
        sp.add_argument("--alphas", help="semicolon or comma separated")
        sp.add_argument("--betas", help="semicolon or comma separated")
        sp.add_argument("--P", type=float)
        sp.add_argument("--grid", type=int, help="frequency grid size")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--bits", action="store_true", default=None, help="report bits instead of nats")

    cap = sub.add_parser("capacity", help="capacity of one model")
    model_args(cap)
    cap.add_argument("--method", help="arma1|cert|iterate|nblock|waterfill|all or a comma list")
    cap.add_argument("--budget", type=int, help="Newton starts per layout")
    cap.add_argument("--horizon", type=int, help="n-block horizon")
    cap.add_argument("--cert-out", help="write the certificate here")
    cap.add_argument("--no-timing", action="store_true", default=None, help="leave seconds empty")

    sw = sub.add_parser("sweep", help="capacity along a parameter")
    model_args(sw)
    sw.add_argument("--preset", help="A or B")
    sw.add_argument("--param", help="alphaN, betaN or P")
    sw.add_argument("--start", type=float)
    sw.add_argument("--stop", type=float)
    sw.add_argument("--steps", type=int)
    sw.add_argument("--method")
    sw.add_argument("--budget", type=int)
    sw.add_argument("--out")
    sw.add_argument("--workers", type=int)

    ver = sub.add_parser("verify", help="check a certificate file")
    ver.add_argument("certificate")
    model_args(ver)

    orc = sub.add_parser("oracle", help="n-block lower bounds")
    model_args(orc)
    orc.add_argument("--n", default=None, help="comma separated horizons")
    return p


_CONVERT = {
    "k": int,
    "alphas": _floats,
    "betas": _floats,
    "P": float,
    "grid": int,
    "seed": int,
    "budget": int,
    "horizon": int,
    "workers": int,
    "steps": int,
    "start": float,
    "stop": float,
    "method": str,
    "preset": str,
    "param": str,
    "out": str,
    "cert_out": str,
    "n": str,
    "bits": lambda s: s.lower() in ("1", "true", "yes"),
    "no_timing": lambda s: s.lower() in ("1", "true", "yes"),
}


def _merge(ns):
    """Command-line values over config-file values; returns a dict."""
    values = {}
    if getattr(ns, "config", None):
        for key, raw in read_config_file(ns.config).items():
            if key not in _CONVERT:
                raise UsageError(f"unknown config key {key!r}")
            try:
                values[key] = _CONVERT[key](raw)
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
    for key, val in vars(ns).items():
        if key in ("config", "command", "certificate") or val is None:
            continue
        values[key] = _CONVERT[key](val) if key in ("alphas", "betas") else val
    return values


def _to_config(command, values):
    kw = {"command": command}
    mapping = {
        "k": "k",
        "alphas": "alphas",
        "betas": "betas",
        "P": "P",
        "grid": "grid_n",
        "seed": "seed",
        "budget": "budget",
        "horizon": "horizon",
        "workers": "workers",
        "steps": "steps",
        "start": "start",
        "stop": "stop",
        "method": "method",
        "preset": "preset",
        "param": "param",
        "out": "out",
        "cert_out": "cert_out",
    }
    for src, dst in mapping.items():
        if src in values:
            kw[dst] = values[src]
    if values.get("bits"):
        kw["units"] = "bits"
    if values.get("no_timing"):
        kw["timing"] = False
    return RunConfig(**kw)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = build_parser().parse_args(argv)
        values = _merge(ns)
        cfg = _to_config(ns.command, values)
        if ns.command == "capacity":
            return cmd_capacity(cfg)
        if ns.command == "sweep":
            return cmd_sweep(cfg)
        if ns.command == "verify":
            return cmd_verify(ns.certificate, cfg, use_P="P" in values)
        horizons = _ints(values.get("n", "8,16,32,64"))
        if not horizons or any(n < 1 or n > MAX_N for n in horizons):
            raise UsageError(f"horizons must lie in 1..{MAX_N}")
        return cmd_oracle(cfg, horizons)
    except UsageError as exc:
        print(f"gfcap: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
