"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""

import math
import sys

import numpy as np
import pytest

from wrg.cli import main as cli_main
from wrg.continuum import BSpline, WaveletSmeared, infinite_volume_defect, poisson_defect_check
from wrg.dynamics import (Evolution, causality_scan, delta0, dynamics_defect, evolve, exponent_preservation_defect,
                          hamiltonian_sup_defect)
from wrg.filters import cascade_phi_hat, haar_phi_hat, make_filter, remainder_factor, verify_filter_identities
from wrg.lattice import PhaseField, build_geometry, symplectic_form
from wrg.scalemaps import ScalingMap, apply, scaling_map, step_momentum, step_real
from wrg.states import (MassSchedule, TestFunction, continuum_exponent_via_embedding, convergence_report,
                        flow_exponent, ground_exponent, limit_exponent, two_point_report)

SCHED = MassSchedule(1.0)


@pytest.fixture
def verdict(capsys):
    def say(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, detail
    return say


def test_01_filter_identities(verdict):
    worst = 0.0
    ok = True
    for f in [make_filter("haar")] + [make_filter("daubechies", K=K) for K in (2, 3, 6)]:
        rep = verify_filter_identities(f, 1e-10)
        worst = max(worst, rep.orthonormality, rep.normalization, rep.cross)
        ok &= rep.passed
    verdict(1, "filter identities", ok and worst < 1e-10, f"max defect {worst:.1e}")


def test_02_symplectic_contracts(verdict):
    rng = np.random.default_rng(0)
    worst = 0.0
    for d in (1, 2):
        g = build_geometry(d, 1.0, 2, 0)
        for scheme, K in (("daubechies", 2), ("daubechies", 6), ("haar", None), ("blockspin", None),
                          ("momentum_shell", None), ("momentum_transfer", None)):
            R = scaling_map(scheme, g, 2, K=K)
            for _ in range(100 if d == 1 else 10):
                xi, eta = PhaseField.random(g, rng), PhaseField.random(g, rng)
                s1 = symplectic_form(apply(R, xi.to_momentum()), apply(R, eta.to_momentum()))
                worst = max(worst, abs(s1 - symplectic_form(xi, eta)))
    point = 0.0
    for d in (1, 2):
        g = build_geometry(d, 1.0, 2, 0)
        R = scaling_map("point", g, 3)
        for _ in range(100):
            xi, eta = PhaseField.random(g, rng), PhaseField.random(g, rng)
            s0 = symplectic_form(xi, eta)
            point = max(point, abs(symplectic_form(apply(R, xi), apply(R, eta)) - 2.0 ** (3 * d) * s0))
    verdict(2, "symplectic contracts", worst < 1e-10 and point < 1e-10,
            f"preservation {worst:.1e}, point scaling {point:.1e}")


def test_03_semigroup_and_conjugacy(verdict):
    rng = np.random.default_rng(1)
    semi = conj = 0.0
    for d in (1, 2):
        g = build_geometry(d, 1.0, 2, 0)
        for scheme, K in (("daubechies", 3), ("haar", None), ("blockspin", None), ("point", None),
                          ("momentum_shell", None)):
            xi = PhaseField.random(g, rng).to_momentum()
            whole = apply(ScalingMap(scheme, g, 0, 3, K), xi)
            part = apply(ScalingMap(scheme, g, 1, 3, K), apply(ScalingMap(scheme, g, 0, 1, K), xi))
            semi = max(semi, (whole - part).max_abs())
            R = scaling_map(scheme, g, 1, K=K)
            real = PhaseField.random(g, rng)
            conj = max(conj, (step_real(R, real).to_momentum() - step_momentum(R, real.to_momentum())).max_abs())
    verdict(3, "semigroup and transform conjugacy", max(semi, conj) < 1e-12,
            f"semigroup {semi:.1e}, conjugacy {conj:.1e}")


def test_04_cascade_limit(verdict):
    k = np.linspace(-20, 20, 4001)
    haar = np.abs(cascade_phi_hat(make_filter("haar"), k, 40).value - haar_phi_hat(k)).max()
    grid = np.linspace(-np.pi, np.pi, 10_000)
    rem = np.abs(remainder_factor(make_filter("daubechies", K=2), grid)).max()
    verdict(4, "cascade limit", haar < 1e-10 and rem < 2.0, f"Haar {haar:.1e}, remainder sup {rem:.4f} < 2")


def test_05_state_flow_convergence(verdict):
    worst = tail = cons = 0.0
    for K in (2, 6):
        for N in (0, 1):
            xi = PhaseField.delta(build_geometry(1, 1.0, 2, N))
            rep = convergence_report("daubechies", xi, SCHED, 12, K)
            chk = rep.checks["terminal_defect"]
            worst = max(worst, chk["defect"])
            tail = max(tail, chk["tail"])
            cons = max(cons, rep.checks["projective_consistency"]["max_defect"])
    ok = worst < 1e-4 and tail < 1e-4 and cons < 1e-10
    verdict(5, "state-flow convergence", ok, f"terminal {worst:.1e}, tail {tail:.1e}, consistency {cons:.1e}")


def test_06_limit_equals_embedding(verdict):
    g = build_geometry(1, 1.0, 2, 0)
    gap = slack = 0.0
    ok = True
    for seed in range(20):
        xi = PhaseField.random(g, np.random.default_rng(seed))
        a = limit_exponent("daubechies", xi, 1.0, K=6)
        b = continuum_exponent_via_embedding(xi, 1.0, K=6)
        gap = max(gap, abs(a.value - b.value))
        slack = max(slack, a.tail + b.tail)
        ok &= abs(a.value - b.value) <= a.tail + b.tail + 1e-12
    verdict(6, "limit vs embedding", ok and gap < 1e-6, f"max gap {gap:.1e}, combined tail {slack:.1e}")


def test_07_momentum_transfer_identity(verdict):
    g = build_geometry(1, 1.0, 2, 0)
    xi = PhaseField.random(g, np.random.default_rng(2))
    worst = 0.0
    for M in range(11):
        v = flow_exponent("momentum_transfer", M, xi, SCHED).value
        ref = ground_exponent(g, SCHED.dispersion(g, 2.0**-M), xi).value
        worst = max(worst, abs(v - ref))
    verdict(7, "momentum-transfer identity", worst < 1e-12, f"max defect {worst:.1e}")


def _test_function(seed, L=2.0, kc=3):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(2 * kc + 1) + 1j * rng.standard_normal(2 * kc + 1)
    n = np.arange(-kc, kc + 1) * math.pi / L
    return TestFunction(L, c * np.exp(-n**2 / 8))


def test_08_two_point_limits(verdict):
    cont = phipi = 0.0
    for i in range(5):
        f, f2 = _test_function(2 * i), _test_function(2 * i + 1)
        for scheme, N in (("point", 0), ("blockspin", 6)):
            rep = two_point_report(scheme, build_geometry(1, 1.0, 2, N), f, f2, SCHED, 12)
            cont = max(cont, rep.checks["continuum"]["defect"])
            phipi = max(phipi, rep.checks["phipi_mass_independent"]["defect"])
    verdict(8, "two-point limits", cont < 1e-4 and phipi < 1e-10, f"continuum {cont:.1e}, phi-pi {phipi:.1e}")


def test_09_dynamics(verdict):
    g = build_geometry(1, 1.0, 2, 0)
    xi = PhaseField.delta(g)
    mono = True
    last = 0.0
    for t in (0.1, 0.5, 1.0):
        vals = [dynamics_defect(xi, Np, t, SCHED, K=6).value for Np in range(1, 7)]
        mono &= all(b < a for a, b in zip(vals, vals[1:]))
        last = max(last, vals[-1])
    pres = max(exponent_preservation_defect(PhaseField.random(g, np.random.default_rng(s)), SCHED, t)
               for s in range(3) for t in (0.1, 0.5, 1.0))
    ev = Evolution(SCHED.dispersion(g), 0.5)
    R = ScalingMap("daubechies", g, 0, 4, 6)
    mom = PhaseField.random(g, np.random.default_rng(9)).to_momentum()
    ext = (evolve(ev, apply(R, mom)) - apply(R, evolve(ev, mom))).max_abs()
    ok = mono and last < 1e-3 and pres < 1e-10 and ext < 1e-12
    verdict(9, "dynamics convergence", ok,
            f"monotone {mono}, terminal {last:.1e}, ground {pres:.1e}, extended {ext:.1e}")


def test_10_lieb_robinson(verdict):
    g = build_geometry(1, 1.0, 4, 0)
    xi = PhaseField.delta(g, [-2], "q")
    xp = PhaseField.delta(g, [1], "p")
    rep = causality_scan(xi, xp, [0, 2, 4, 6, 8], [-1.0, -0.4, -0.2, 0.0, 0.2, 0.4, 1.0], SCHED, "haar")
    vel = rep.meta["velocity"]
    ok = (rep.checks["bound_dominates"]["passed"] and rep.checks["outside_cone"]["passed"]
          and abs(vel - 2 / delta0()) < 1e-3)
    verdict(10, "Lieb-Robinson", ok, f"velocity {vel:.5f}, dominated {rep.checks['bound_dominates']['passed']}, "
            f"outside cone {rep.checks['outside_cone']['passed']}")


def test_11_hamiltonian(verdict):
    g = build_geometry(1, 1.0, 2, 0)
    vals = [hamiltonian_sup_defect(g, M, SCHED) for M in range(13)]
    mono = all(b < a for a, b in zip(vals, vals[1:]))
    verdict(11, "momentum-cutoff Hamiltonian", mono and vals[-1] < 1e-6, f"monotone {mono}, M=12 {vals[-1]:.1e}")


def test_12_infinite_volume(verdict):
    rng = np.random.default_rng(0)
    ws = WaveletSmeared(make_filter("daubechies", K=6), 2.0**-3, np.arange(-2, 1)[:, None],
                        rng.standard_normal(3), rng.standard_normal(3))
    rep = infinite_volume_defect(ws.line_field(), [2, 4, 8, 16])
    d = rep.column("defect")
    ok = rep.checks["monotone"]["passed"] and rep.checks["terminal"]["passed"]
    verdict(12, "infinite volume", ok, "defects " + ", ".join(f"{v:.1e}" for v in d))


def test_13_bessel_defect(verdict):
    pairs = [(BSpline(0.0, 0.25, 6), BSpline(0.0, 0.25, 6)),
             (BSpline(-0.3, 0.2, 6), BSpline(0.4, 0.25, 5)),
             (BSpline(0.5, 0.15, 6), BSpline(-0.6, 0.3, 4))]
    gap = 0.0
    for xi, eta in pairs:
        res = poisson_defect_check(xi, eta, 2.0, 1.0)
        gap = max(gap, abs(res["lhs_minus"] - res["rhs_minus"]), abs(res["lhs_plus"] - res["rhs_plus"]))
    verdict(13, "image-kernel identities", gap < 1e-5, f"max lhs-rhs {gap:.1e}")


def test_14_determinism(verdict, tmp_path):
    same = True
    for exp, extra in (("flow", ["M_max=6", "seed=3"]), ("dynamics", ["M_max=3"]), ("poisson_defect", [])):
        for run in ("a", "b"):
            cli_main([exp, *extra, "--out", str(tmp_path / exp / run)])
        for name in ("report.json", "report.csv"):
            same &= (tmp_path / exp / "a" / name).read_bytes() == (tmp_path / exp / "b" / name).read_bytes()
    verdict(14, "determinism", same, "flow, dynamics and poisson_defect reports byte-identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
