"""Command-line front end: tables, oracles, engine comparisons and identity suites.

Every table is written as '#'-prefixed metadata (the effective configuration
and diagnostics) followed by "x,value" rows, or as one JSON document.  The
thread count is deliberately left out of the metadata: it never changes the
numbers, and leaving it out keeps files byte-identical across thread counts.

Exit codes: 0 ok, 1 invalid configuration, 2 unconverged output, 3 failed
comparison or check.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from dataclasses import replace
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from . import checks
from .contour import ContourSpec
from .errors import ConfigurationError, DomainError, SingularConfigurationError
from .finite import InitialConfig, occupation_prob_finite, position_pmf_finite, second_class_pmf_finite
from .oracles.ctmc import Window, ctmc_build, ctmc_pmf
from .oracles.mc import mc_run
from .qcalc import RateParams
from .step import SeriesSpec, default_window, step_table

EXIT_OK, EXIT_CONFIG, EXIT_UNCONVERGED, EXIT_FAIL = 0, 1, 2, 3
ENGINES = ("step", "fredholm", "nested", "tasep", "ctmc", "simulate")

log = logging.getLogger("secondclass")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; that code means "unconverged" here
    def error(self, message):
        raise UsageError(message)


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover
        return "dev"


# ---------------------------------------------------------------------------
# arguments
# ---------------------------------------------------------------------------

DEFAULTS = {
    "p": 0.3,
    "t": 1.0,
    "x_min": None,
    "x_max": None,
    "kmax": 12,
    "R": None,
    "M": None,
    "paths": 10000,
    "seed": 0,
    "window": None,
    "format": "csv",
    "out": None,
    "tol": None,
    "threads": 1,
    "kind": None,
    "sites": "1,2,3,4",
    "quantity": "second",
    "m": 1,
    "engines": "step,ctmc",
    "metric": "max",
    "ci_k": 4.0,
    "mutate": None,
}


_NUMERIC = {"p", "t", "x_min", "x_max", "kmax", "R", "M", "tol"}
RELEVANT = {
    "pmf": _NUMERIC,
    "cdf": _NUMERIC,
    "tasep": {"t", "x_min", "x_max", "kmax", "R", "M", "tol", "kind"},
    "finite": {"p", "t", "x_min", "x_max", "R", "M", "sites", "quantity", "m"},
    "simulate": {"p", "t", "x_min", "x_max", "paths", "seed", "window"},
    "ctmc": {"p", "t", "x_min", "x_max", "window"},
    "compare": _NUMERIC | {"paths", "seed", "window", "engines", "kind", "metric", "ci_k"},
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="secondclass", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option values (flags take precedence)")
        sp.add_argument("--p", type=float, help="right jump rate, 0 < p < 0.5")
        sp.add_argument("--t", type=float, help="time, t >= 0")
        sp.add_argument("--x-min", type=int, dest="x_min")
        sp.add_argument("--x-max", type=int, dest="x_max")
        sp.add_argument("--kmax", type=int, help="maximum series order")
        sp.add_argument("--R", type=float, help="contour radius")
        sp.add_argument("--M", type=int, help="initial node count")
        sp.add_argument("--paths", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--window", help="site window a:b")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--threads", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    for name, help_ in (
        ("pmf", "P(X(t) = x) for step initial data"),
        ("cdf", "P(X(t) <= x) for step initial data"),
    ):
        common(sub.add_parser(name, help=help_))
    sp = common(sub.add_parser("tasep", help="tau -> 0 limit of the step distribution"))
    sp.add_argument("--kind", choices=("cdf", "pmf"))
    sp = common(sub.add_parser("finite", help="finite initial configuration Y"))
    sp.add_argument("--sites", help="comma-separated Y, e.g. 1,2,3,4")
    sp.add_argument("--quantity", choices=("second", "occupation", "position"))
    sp.add_argument("--m", type=int, help="particle index for --quantity position")
    common(sub.add_parser("simulate", help="Monte Carlo law of X(t)"))
    common(sub.add_parser("ctmc", help="exact law of X(t) on a finite window"))
    sp = common(sub.add_parser("compare", help="compare two engines"))
    sp.add_argument("--engines", help=f"two of {','.join(ENGINES)}")
    sp.add_argument("--kind", choices=("pmf", "cdf"))
    sp.add_argument("--metric", choices=("max", "tv"))
    sp.add_argument("--ci-k", type=float, dest="ci_k", help="allowed deviation in CI half-widths (Monte Carlo)")
    sp = sub.add_parser("check", help="identity and quadrature suites")
    sp.add_argument("suite", choices=("identities", "quadrature", "all"))
    sp.add_argument("--mutate", choices=sorted(checks.MUTATIONS), help="inject a known defect (suite sensitivity)")
    sp.add_argument("--out")
    sp.add_argument("--config")
    sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve(ns: argparse.Namespace) -> dict:
    """Flags over config file over defaults."""
    cfg = dict(DEFAULTS)
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from None
        unknown = set(from_file) - set(DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(from_file)
    for key in DEFAULTS:
        v = getattr(ns, key, None)
        if v is not None:
            cfg[key] = v
    cfg["command"] = ns.command
    if ns.command == "check":
        cfg["suite"] = ns.suite
    return cfg


def _validate(cfg: dict) -> None:
    cmd = cfg["command"]
    if cmd == "check":
        return
    if cmd != "tasep" and not 0.0 < cfg["p"] < 0.5:
        raise ConfigurationError(f"--p must satisfy 0 < p < 0.5, got {cfg['p']}")
    if not cfg["t"] >= 0:
        raise ConfigurationError(f"--t must satisfy t >= 0, got {cfg['t']}")
    if cfg["x_min"] is not None and cfg["x_max"] is not None and cfg["x_min"] > cfg["x_max"]:
        raise ConfigurationError("--x-min must be <= --x-max")
    if cfg["kmax"] < 1:
        raise ConfigurationError(f"--kmax must be >= 1, got {cfg['kmax']}")
    if cfg["paths"] < 1:
        raise ConfigurationError(f"--paths must be >= 1, got {cfg['paths']}")
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigurationError("--seed must be a 64-bit unsigned integer")
    if cfg["threads"] < 1:
        raise ConfigurationError("--threads must be >= 1")
    if cfg["tol"] is not None and not cfg["tol"] > 0:
        raise ConfigurationError("--tol must be > 0")


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------


def _params(cfg) -> RateParams:
    return RateParams(cfg["p"])


def _xs(cfg, default_half: int | None = None) -> list[int]:
    half = default_half if default_half is not None else default_window(cfg["t"])
    lo = cfg["x_min"] if cfg["x_min"] is not None else -half
    hi = cfg["x_max"] if cfg["x_max"] is not None else half
    return list(range(lo, hi + 1))


def _window(cfg, default: str) -> Window:
    return Window.parse(cfg["window"] or default)


def _series(cfg, engine: str = "hybrid", params: RateParams | None = None) -> SeriesSpec:
    base = SeriesSpec(k_max=cfg["kmax"], engine=engine)
    if cfg["tol"] is not None:
        base = replace(base, conv_tol=cfg["tol"])
    if cfg["R"] is not None or cfg["M"] is not None:
        spec = base.contour_for(params) if params is not None else ContourSpec()
        spec = ContourSpec(cfg["R"] if cfg["R"] is not None else spec.R, cfg["M"] if cfg["M"] is not None else spec.M)
        base = replace(base, contour=spec)
    return base


class Table:
    def __init__(self, columns, rows, meta=None, diagnostics=None, converged=True):
        self.columns = list(columns)
        self.rows = rows
        self.meta = meta or {}
        self.diagnostics = diagnostics or {}
        self.converged = converged


def _step_table(cfg, kind, tasep=False, engine="hybrid") -> Table:
    P = None if tasep else _params(cfg)
    series = _series(cfg, engine, P)
    if tasep:
        T = step_table(kind, _xs(cfg), cfg["t"], series=series, tasep=True)
    else:
        T = step_table(kind, _xs(cfg), cfg["t"], P, series)
    d = T.diagnostics()
    d["unconverged_sites"] = sorted(x for x, r in T.results.items() if not r.converged)
    d["quad_converged"] = bool(T.quad_error < series.conv_tol)
    ok = T.converged and d["quad_converged"]
    return Table(("x", "value"), [(x, T.entries[x]) for x in sorted(T.entries)], diagnostics=d, converged=ok)


def engine_table(cfg, engine: str, kind: str) -> Table:
    if engine == "step":
        return _step_table(cfg, kind)
    if engine == "fredholm":
        return _step_table(cfg, kind, engine="fredholm")
    if engine == "nested":
        return _step_table(cfg, kind, engine="nested")
    if engine == "tasep":
        return _step_table(cfg, kind, tasep=True)
    if engine == "ctmc":
        w = _window(cfg, "-6:6")
        res = ctmc_pmf(ctmc_build(_params(cfg), w), cfg["t"])
        xs = _xs(cfg, default_half=max(-w.lo, w.hi))
        vals = _from_pmf(res.pmf, xs, kind, w)
        d = {"boundary_mass": res.boundary_mass, "total_mass": res.total_mass, "states": None}
        return Table(("x", "value"), list(zip(xs, vals)), diagnostics=d)
    if engine == "simulate":
        L = default_window(cfg["t"])
        w = _window(cfg, f"{-L}:{L}")
        res = mc_run(_params(cfg), cfg["t"], w, cfg["paths"], cfg["seed"], threads=cfg["threads"])
        if cfg["x_min"] is None and cfg["x_max"] is None:
            xs = [x for x in sorted(res.pmf_hat) if res.counts[x] > 0]
        else:
            xs = _xs(cfg)
        vals = _from_pmf(res.pmf_hat, xs, kind, w)
        ci = [res.ci_halfwidth.get(x, 0.0) for x in xs]
        d = {
            "boundary_touch_rate": res.boundary_touch_rate,
            "exit_attempt_rate": res.exit_attempt_rate,
            "n_paths": res.n_paths,
        }
        return Table(("x", "value", "ci_halfwidth"), [(x, v, c) for x, v, c in zip(xs, vals, ci)], diagnostics=d)
    raise ConfigurationError(f"unknown engine {engine!r}; choose from {ENGINES}")


def _from_pmf(pmf: dict, xs, kind, window: Window):
    if kind == "pmf":
        return [float(pmf.get(x, 0.0)) for x in xs]
    out = []
    for x in xs:
        out.append(math.fsum(pmf.get(z, 0.0) for z in range(window.lo, x + 1)))
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_table(cfg) -> Table:
    cmd = cfg["command"]
    if cmd in ("pmf", "cdf"):
        t = _step_table(cfg, cmd)
        if cmd == "pmf":
            t.diagnostics["mass_defect"] = abs(1.0 - math.fsum(v for _, v in t.rows))
        return t
    if cmd == "tasep":
        return _step_table(cfg, cfg["kind"] or "cdf", tasep=True)
    if cmd == "simulate":
        return engine_table(cfg, "simulate", "pmf")
    if cmd == "ctmc":
        t = engine_table(cfg, "ctmc", "pmf")
        w = _window(cfg, "-6:6")
        t.diagnostics["states"] = ctmc_build(_params(cfg), w).n_states
        return t
    if cmd == "finite":
        return cmd_finite(cfg)
    raise ConfigurationError(f"unknown command {cmd}")


def cmd_finite(cfg) -> Table:
    try:
        Y = InitialConfig(tuple(int(s) for s in str(cfg["sites"]).split(",") if s.strip()))
    except ValueError as exc:
        raise ConfigurationError(f"bad --sites: {exc}") from None
    P = _params(cfg)
    xs = _xs(cfg, default_half=6)
    spec = None
    if cfg["R"] is not None or cfg["M"] is not None:
        spec = ContourSpec(cfg["R"] or 3.75, cfg["M"] or 24)
    q = cfg["quantity"]
    if q == "second":
        res = second_class_pmf_finite(Y, xs, cfg["t"], P, spec)
    elif q == "occupation":
        res = occupation_prob_finite(Y, xs, cfg["t"], P, spec)
    else:
        res = position_pmf_finite(Y, cfg["m"], xs, cfg["t"], P, spec)
    d = {
        "M": res[0].M,
        "R": res[0].R,
        "max_imag": max(abs(r.imag) for r in res),
        "sites": list(Y.sites),
    }
    return Table(("x", "value"), [(x, r.value) for x, r in zip(xs, res)], diagnostics=d)


def cmd_compare(cfg) -> tuple[Table, bool]:
    names = [e.strip() for e in str(cfg["engines"]).split(",")]
    if len(names) != 2:
        raise ConfigurationError("--engines needs exactly two engine names")
    kind = cfg["kind"] or "pmf"
    A = engine_table(cfg, names[0], kind)
    B = engine_table(cfg, names[1], kind)
    a = {r[0]: r for r in A.rows}
    b = {r[0]: r for r in B.rows}
    xs = sorted(set(a) | set(b))
    mc = [T for T in (A, B) if "ci_halfwidth" in T.columns]
    rows, diffs, z = [], [], []
    for x in xs:
        va = a[x][1] if x in a else 0.0
        vb = b[x][1] if x in b else 0.0
        diff = abs(va - vb)
        diffs.append(diff)
        row = [x, va, vb, diff]
        if mc:
            r = a.get(x) if "ci_halfwidth" in A.columns else b.get(x)
            ref = vb if "ci_halfwidth" in A.columns else va
            hw = r[2] if r is not None else 0.0
            if hw == 0.0:
                # empty or full bin: use the half-width implied by the reference value
                n = cfg["paths"]
                hw = 2.5758293035489004 * math.sqrt(max(ref * (1.0 - ref), 0.0) / n)
            zz = diff / hw if hw > 0 else (0.0 if diff == 0 else math.inf)
            z.append(zz)
            row += [hw, zz]
        rows.append(tuple(row))
    tv = 0.5 * math.fsum(diffs) if kind == "pmf" else float("nan")
    tol = cfg["tol"]
    if mc:
        k = cfg["ci_k"]
        ok = all(v <= k for v in z)
        verdict = {"rule": f"every bin within {k} CI half-widths", "max_z": max(z) if z else 0.0,
                   "within_1": sum(v <= 1 for v in z), "within_k": sum(v <= k for v in z), "bins": len(z)}
    else:
        metric = cfg["metric"]
        tol = tol if tol is not None else (1e-3 if metric == "tv" else 1e-8)
        stat = tv if metric == "tv" else max(diffs)
        ok = stat < tol
        verdict = {"rule": f"{metric} < {tol!r}", "statistic": stat}
    cols = ["x", names[0], names[1], "abs_diff"] + (["ci_halfwidth", "z"] if mc else [])
    d = {"engine_a": A.diagnostics, "engine_b": B.diagnostics, "max_abs_diff": max(diffs), "tv": tv,
         "pass": ok, **verdict}
    return Table(cols, rows, diagnostics=d, converged=A.converged and B.converged), ok


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else repr(f)
    return o


def render(table: Table, cfg: dict) -> str:
    keys = RELEVANT.get(cfg["command"], set(cfg))
    meta = {k: v for k, v in sorted(cfg.items()) if k in keys or k == "command"}
    meta["version"] = _version()
    buf = io.StringIO()
    if cfg.get("format", "csv") == "json":
        doc = {"config": meta, "diagnostics": table.diagnostics, "columns": table.columns,
               "rows": [list(r) for r in table.rows], "converged": table.converged}
        json.dump(_jsonable(doc), buf, sort_keys=True, indent=1)
        buf.write("\n")
        return buf.getvalue()
    for k, v in meta.items():
        buf.write(f"# {k}={json.dumps(_jsonable(v))}\n")
    for k, v in sorted(table.diagnostics.items()):
        buf.write(f"# diag.{k}={json.dumps(_jsonable(v), sort_keys=True)}\n")
    buf.write(f"# converged={json.dumps(table.converged)}\n")
    buf.write(",".join(table.columns) + "\n")
    for r in table.rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _glue_negative(argv):
    # "--window -5:5" would be read as a new flag; pass it as "--window=-5:5"
    out, it = [], iter(argv)
    for a in it:
        if a == "--window":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--window={nxt}")
        else:
            out.append(a)
    return out


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = build_parser().parse_args(_glue_negative(argv))
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        cfg = resolve(ns)
        _validate(cfg)
        if cfg["command"] == "check":
            c_mk = checks.MUTATIONS[cfg["mutate"]] if cfg["mutate"] else checks.finite.c_mk
            summary = checks.run_suite(cfg["suite"], c_mk)
            summary["mutation"] = cfg["mutate"]
            _emit(json.dumps(_jsonable(summary), sort_keys=True, indent=1) + "\n", cfg["out"])
            return EXIT_OK if summary["ok"] else EXIT_FAIL
        if cfg["command"] == "compare":
            table, ok = cmd_compare(cfg)
            _emit(render(table, cfg), cfg["out"])
            return EXIT_OK if ok else EXIT_FAIL
        table = cmd_table(cfg)
        _emit(render(table, cfg), cfg["out"])
        return EXIT_OK if table.converged else EXIT_UNCONVERGED
    except (UsageError, ConfigurationError, DomainError, SingularConfigurationError) as exc:
        sys.stderr.write(f"secondclass: error: {exc}\n")
        return EXIT_CONFIG
    except ArithmeticError as exc:
        # quadrature could not be resolved (e.g. imaginary residue over the guard)
        sys.stderr.write(f"secondclass: unresolved: {exc}\n")
        return EXIT_UNCONVERGED


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
