"""Command line runner: ``wrg <experiment> --config cfg.json [key=value ...] --out dir``.

Every experiment writes ``report.csv`` and ``report.json`` (deterministic for a
fixed config and seed) plus ``run.json`` holding the timestamp and versions.
Exit status: 0 when every asserted tolerance holds, 2 when one fails, 1 for a
bad configuration.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .continuum import BSpline, WaveletSmeared, infinite_volume_defect, poisson_defect_check
from .dynamics import causality_scan, dynamics_defect, exponent_preservation_defect
from .filters import FilterError, make_filter, verify_filter_identities
from .lattice import GeometryError, PhaseField, build_geometry
from .scalemaps import canonical_scheme
from .states import FlowReport, MassSchedule, StateError, TestFunction, convergence_report, \
    dispersion_defects, two_point_report

EXPERIMENTS = ("filter_check", "flow", "two_point", "dynamics", "causality", "hamiltonian",
               "infinite_volume", "poisson_defect")

DEFAULTS = {
    "experiment": None,
    "scheme": "daubechies",
    "d": 1,
    "eps": 1.0,
    "r": 2,
    "m": 1.0,
    "K": 2,
    "N": 0,
    "M_max": 8,
    "k_cutoff": None,
    "delta": None,
    "t_grid": [0.1, 0.5, 1.0],
    "tolerance": None,
    "seed": 0,
    "expect_divergence": False,
    "target": "exponent",
    "L_list": [2, 4, 8, 16],
    "L": 2.0,
    "field": "random",
    "out": ".",
}

# per-experiment tolerances and a few overrides that only make sense there
EXPERIMENT_DEFAULTS = {
    "filter_check": {"tolerance": 1e-10},
    "flow": {"tolerance": 1e-4, "M_max": 12},
    "two_point": {"tolerance": 1e-4, "scheme": "point", "M_max": 6},
    "dynamics": {"tolerance": 1e-3, "K": 6, "M_max": 6, "field": "delta"},
    "causality": {"tolerance": 1e-6, "scheme": "haar", "r": 4, "t_grid": [-1.0, -0.4, -0.2, 0.0, 0.2, 0.4, 1.0]},
    "hamiltonian": {"tolerance": 1e-6, "scheme": "momentum_shell", "M_max": 12},
    "infinite_volume": {"tolerance": 1e-4, "K": 6, "N": 3},
    "poisson_defect": {"tolerance": 1e-5},
}

INT_KEYS = {"d", "r", "K", "N", "M_max", "seed"}
FLOAT_KEYS = {"eps", "m", "L"}
OPTIONAL_FLOAT = {"delta", "tolerance"}


class ConfigError(ValueError):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(experiment: str, path: str | None, overrides: list[str]) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; valid: {', '.join(EXPERIMENTS)}")
    cfg = dict(DEFAULTS)
    cfg.update(EXPERIMENT_DEFAULTS[experiment])
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update(user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        cfg[key.strip()] = _parse_value(val)
    if cfg.get("experiment") not in (None, experiment):
        raise ConfigError(f"config names experiment {cfg['experiment']!r} but {experiment!r} was requested")
    cfg["experiment"] = experiment
    return validate(cfg)


def validate(cfg: dict) -> dict:
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for k in INT_KEYS:
        v = cfg[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or float(v) != int(v):
            raise ConfigError(f"{k} must be an integer, got {v!r}")
        cfg[k] = int(v)
    for k in FLOAT_KEYS:
        if isinstance(cfg[k], bool) or not isinstance(cfg[k], (int, float)):
            raise ConfigError(f"{k} must be a number, got {cfg[k]!r}")
        cfg[k] = float(cfg[k])
    for k in OPTIONAL_FLOAT:
        if cfg[k] is not None:
            if isinstance(cfg[k], bool) or not isinstance(cfg[k], (int, float)):
                raise ConfigError(f"{k} must be a number or null")
            cfg[k] = float(cfg[k])
    if cfg["k_cutoff"] is not None and (not isinstance(cfg["k_cutoff"], int) or cfg["k_cutoff"] < 1):
        raise ConfigError("k_cutoff must be a positive integer or null")
    for k in ("t_grid", "L_list"):
        if not isinstance(cfg[k], list) or not cfg[k] or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in cfg[k]):
            raise ConfigError(f"{k} must be a non-empty list of numbers")
        cfg[k] = [float(v) for v in cfg[k]]
    if not isinstance(cfg["expect_divergence"], bool):
        raise ConfigError("expect_divergence must be true or false")
    if cfg["field"] not in ("random", "delta"):
        raise ConfigError("field must be 'random' or 'delta'")
    if cfg["target"] not in ("exponent", "two_point"):
        raise ConfigError("target must be 'exponent' or 'two_point'")
    if not 1 <= cfg["d"] <= 3:
        raise ConfigError("d must be 1, 2 or 3")
    if cfg["M_max"] < 0 or cfg["N"] < 0:
        raise ConfigError("N and M_max must be non-negative")
    if cfg["m"] <= 0:
        raise ConfigError("m must be positive")
    try:
        cfg["scheme"] = canonical_scheme(str(cfg["scheme"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def workers() -> int:
    try:
        return max(1, int(os.environ.get("WRG_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


def _filter_info(cfg) -> dict | None:
    scheme = cfg["scheme"]
    if scheme in ("momentum_shell", "momentum_transfer"):
        return {"scheme": scheme}
    K = cfg["K"] if scheme == "daubechies" else None
    f = make_filter(scheme, K=K, d=1)
    return {"scheme": scheme, "K": f.K, "offsets": list(f.offsets), "values": [float(v) for v in f.values]}


def _field(cfg, rng) -> PhaseField:
    """White noise in both channels, or a unit q delta at the origin."""
    g = build_geometry(cfg["d"], cfg["eps"], cfg["r"], cfg["N"])
    if cfg["field"] == "delta":
        return PhaseField.delta(g)
    return PhaseField.random(g, rng)


# --- experiments -------------------------------------------------------------

def run_filter_check(cfg, rng) -> FlowReport:
    f = make_filter(cfg["scheme"], K=cfg["K"] if cfg["scheme"] == "daubechies" else None, d=cfg["d"],
                    r_fine=2 * cfg["r"] if cfg["scheme"] == "momentum_shell" else None)
    fr = verify_filter_identities(f, cfg["tolerance"])
    rep = FlowReport(meta={"filter": fr.as_dict()})
    for name in ("orthonormality", "normalization", "moments", "cross_orthogonality"):
        rep.add(scheme=f.scheme, d=f.d, value=fr.as_dict()[name], defect=fr.as_dict()[name], identity=name)
    worst = max(r["defect"] for r in rep.rows)
    rep.checks["identities"] = {"max_defect": worst, "tol": cfg["tolerance"], "passed": fr.passed}
    return rep


def run_flow(cfg, rng) -> FlowReport:
    xi = _field(cfg, rng)
    sched = MassSchedule(cfg["m"])
    K = cfg["K"] if cfg["scheme"] == "daubechies" else None
    if cfg["target"] == "two_point":
        return run_two_point(cfg, rng)
    rep = convergence_report(cfg["scheme"], xi, sched, cfg["M_max"], K, cfg["k_cutoff"], cfg["tolerance"])
    if "limit" in rep.checks and cfg["expect_divergence"]:
        div = rep.checks["limit"]["divergent"]
        rep.checks["limit"]["expected"] = True
        rep.checks["limit"]["passed"] = bool(div)
    return rep


def _test_function(L, d, kc, rng) -> TestFunction:
    shape = (2 * kc + 1,) * d
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    n = np.arange(-kc, kc + 1) * (math.pi / L)
    k2 = sum(np.meshgrid(*([n * n] * d), indexing="ij"))
    return TestFunction(L, c * np.exp(-k2 / 8))


def run_two_point(cfg, rng) -> FlowReport:
    g = build_geometry(cfg["d"], cfg["eps"], cfg["r"], cfg["N"])
    kc = cfg["k_cutoff"] or 4
    f = _test_function(g.L, g.d, kc, rng)
    f2 = _test_function(g.L, g.d, kc, rng)
    return two_point_report(cfg["scheme"], g, f, f2, MassSchedule(cfg["m"]), cfg["M_max"], cfg["tolerance"])


def run_dynamics(cfg, rng) -> FlowReport:
    xi = _field(cfg, rng)
    sched = MassSchedule(cfg["m"])
    N = cfg["N"]
    rep = FlowReport(meta={"K": cfg["K"], "m": cfg["m"], "N": N})
    levels = range(N + 1, N + cfg["M_max"] + 1)

    def one(t):
        return t, [dynamics_defect(xi, Np, t, sched, K=cfg["K"], k_cutoff=cfg["k_cutoff"]) for Np in levels]

    ok = True
    for t, res in _map(one, cfg["t_grid"]):
        vals = [r.value for r in res]
        for Np, r in zip(levels, res):
            rep.add(scheme="daubechies", d=xi.geometry.d, N=N, M=Np - N, value=r.value, defect=r.value,
                    tail_bound=r.tail, t=t, k_cutoff=r.k_cutoff)
        mono = all(b < a for a, b in zip(vals, vals[1:]))
        ok &= mono and vals[-1] < cfg["tolerance"]
        rep.checks[f"t={t!r}"] = {"monotone": mono, "terminal": vals[-1], "tol": cfg["tolerance"],
                                  "passed": bool(mono and vals[-1] < cfg["tolerance"])}
    pres = max(exponent_preservation_defect(xi, sched, t) for t in cfg["t_grid"])
    rep.checks["ground_preserved"] = {"max_defect": pres, "tol": 1e-10, "passed": pres < 1e-10}
    return rep


def run_causality(cfg, rng) -> FlowReport:
    g = build_geometry(cfg["d"], cfg["eps"], cfg["r"], cfg["N"])
    a = np.zeros(g.d, int)
    a[0] = -g.r_n // 2
    b = np.zeros(g.d, int)
    b[0] = g.r_n // 4
    xi = PhaseField.delta(g, a, "q")
    xp = PhaseField.delta(g, b, "p")
    M_values = list(range(0, cfg["M_max"] + 1, 2))
    K = cfg["K"] if cfg["scheme"] == "daubechies" else None
    return causality_scan(xi, xp, M_values, cfg["t_grid"], MassSchedule(cfg["m"]), cfg["scheme"], K,
                          cfg["delta"], tol=cfg["tolerance"])


def run_hamiltonian(cfg, rng) -> FlowReport:
    g = build_geometry(cfg["d"], cfg["eps"], cfg["r"], cfg["N"])
    vals = dispersion_defects(g, MassSchedule(cfg["m"]), cfg["M_max"])
    rep = FlowReport(meta={"m": cfg["m"]})
    for M, v in enumerate(vals):
        rep.add(scheme="momentum_shell", d=g.d, N=g.level, M=M, value=v, defect=v)
    mono = all(b < a for a, b in zip(vals, vals[1:]))
    rep.checks["sup_defect"] = {"monotone": mono, "terminal": vals[-1], "tol": cfg["tolerance"],
                                "passed": bool(mono and vals[-1] < cfg["tolerance"])}
    return rep


def run_infinite_volume(cfg, rng) -> FlowReport:
    f = make_filter("daubechies", K=cfg["K"])
    eps = cfg["eps"] / 2 ** cfg["N"]
    sites = np.arange(-2, 1)[:, None]
    ws = WaveletSmeared(f, eps, sites, rng.standard_normal(3), rng.standard_normal(3))
    return infinite_volume_defect(ws.line_field(), cfg["L_list"], cfg["m"], cfg["tolerance"])


POISSON_PAIRS = (
    ((0.0, 0.25, 6), (0.0, 0.25, 6)),
    ((-0.3, 0.2, 6), (0.4, 0.25, 5)),
    ((0.5, 0.15, 6), (-0.6, 0.3, 4)),
)


def run_poisson_defect(cfg, rng) -> FlowReport:
    if cfg["d"] != 1:
        raise ConfigError("poisson_defect is implemented for d = 1 only")
    L, m, tol = cfg["L"], cfg["m"], cfg["tolerance"]
    pairs = [(BSpline(*a), BSpline(*b)) for a, b in POISSON_PAIRS]
    rep = FlowReport(meta={"L": L, "m": m, "pairs": [list(map(list, p)) for p in POISSON_PAIRS]})
    worst = 0.0
    for i, res in enumerate(_map(lambda p: poisson_defect_check(p[0], p[1], L, m), pairs)):
        for ch in ("minus", "plus"):
            gap = abs(res[f"lhs_{ch}"] - res[f"rhs_{ch}"])
            worst = max(worst, gap)
            rep.add(scheme="bspline", d=1, value=res[f"lhs_{ch}"], defect=gap,
                    tail_bound=res[f"lhs_{ch}_error"] + res[f"rhs_{ch}_error"], pair=i, channel=ch,
                    rhs=res[f"rhs_{ch}"], quoted=res[f"quoted_{ch}"],
                    quoted_ratio=res[f"quoted_ratio_{ch}"])
    rep.checks["lhs_rhs"] = {"max_gap": worst, "tol": tol, "passed": worst < tol}
    return rep


RUNNERS = {
    "filter_check": run_filter_check,
    "flow": run_flow,
    "two_point": run_two_point,
    "dynamics": run_dynamics,
    "causality": run_causality,
    "hamiltonian": run_hamiltonian,
    "infinite_volume": run_infinite_volume,
    "poisson_defect": run_poisson_defect,
}


def run(cfg: dict) -> tuple[int, FlowReport]:
    rng = np.random.default_rng(cfg["seed"])
    rep = RUNNERS[cfg["experiment"]](cfg, rng)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in cfg.items() if k != "out"}
    try:
        filt = _filter_info(cfg)
    except FilterError:
        filt = None
    doc = {"config": echo, "filter": filt, "report": rep.to_dict()}
    from .states import _jsonable

    (out / "report.json").write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")
    (out / "report.csv").write_text(rep.to_csv())
    header = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "wrg": __version__,
              "numpy": np.__version__, "python": platform.python_version(), "argv": sys.argv[1:]}
    (out / "run.json").write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    return (0 if rep.passed else 2), rep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="wrg", description="Run a wavelet renormalization experiment.")
    ap.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--out", help="output directory (default: current)")
    ap.add_argument("overrides", nargs="*", help="key=value overrides")
    args = ap.parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.out is not None:
            overrides.append(f"out={json.dumps(args.out)}")
        cfg = load_config(args.experiment, args.config, overrides)
        code, rep = run(cfg)
    except (ConfigError, GeometryError, FilterError, StateError) as exc:
        print(f"wrg: configuration error: {exc}", file=sys.stderr)
        return 1
    status = "ok" if code == 0 else "tolerance failure"
    print(f"wrg {args.experiment}: {status}; reports in {cfg['out']}")
    for name, chk in sorted(rep.checks.items()):
        print(f"  {name}: {'pass' if chk.get('passed', True) else 'FAIL'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
