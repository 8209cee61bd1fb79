import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrg.lattice import PhaseField, build_geometry, fourier
from wrg.scalemaps import apply, scaling_map
from wrg.states import (CSV_COLUMNS, REPORT_HEADER, DispersionRelation, FlowReport, MassSchedule, StateError,
                        TestFunction, continuum_exponent_via_embedding, convergence_report,
                        dispersion_defects, dominated_envelope_check, flow_exponent, ground_exponent,
                        limit_exponent, looks_divergent, polarization_two_point, two_point_flow,
                        two_point_limit, two_point_report)

SCHED = MassSchedule(1.0)


def _rand(g, seed=0, channels="qp"):
    return PhaseField.random(g, np.random.default_rng(seed), channels)


def _oracle_flow(scheme, M, xi, K=None):
    """Real-space stepping, explicit transform, long-double summation."""
    g = xi.geometry
    out = apply(scaling_map(scheme, g, g.level + M, K=K), xi)
    fine = out.geometry
    n = fine.side
    e = fine.eps_n
    qh = e ** (fine.d / 2) * fourier(out.q)
    ph = e ** (fine.d / 2) * fourier(out.p)
    k = fine.axis_momenta()
    gam = np.sqrt(np.longdouble(1.0) + (2 / e * np.sin(e * k / 2)).astype(np.longdouble) ** 2)
    terms = np.abs(qh).astype(np.longdouble) ** 2 / gam + gam * np.abs(ph).astype(np.longdouble) ** 2
    return float(np.sum(terms) / (4 * np.longdouble(n)))


def test_dispersion_forms():
    g = build_geometry(1, 0.5, 4, 1)
    lat = DispersionRelation.lattice(g, mu=SCHED.mu(g))
    assert lat.mass_sq == pytest.approx(1.0)
    assert lat(np.zeros((1, 1)))[0] == pytest.approx(1.0)
    cont = DispersionRelation.continuum(2.0)
    assert cont(np.array([[1.5]]))[0] == pytest.approx(2.5)
    with pytest.raises(StateError):
        DispersionRelation.lattice(g, mu=1.0)


def test_ground_exponent_examples():
    g = build_geometry(1, 1.0, 2, 0)
    disp = SCHED.dispersion(g)
    assert ground_exponent(g, disp, PhaseField.real(g)).value == 0.0
    qh = np.zeros(4, complex)
    qh[g.r_n] = 3.0
    xi = PhaseField.momentum(g, qh)
    assert ground_exponent(g, disp, xi).value == pytest.approx(0.25 * 9 / 4)
    r = _rand(g, 3)
    assert ground_exponent(g, disp, 2 * r).value == pytest.approx(4 * ground_exponent(g, disp, r).value)


def test_flow_at_zero_steps_is_ground():
    g = build_geometry(1, 1.0, 2, 1)
    xi = _rand(g)
    for scheme, K in (("daubechies", 2), ("blockspin", None), ("momentum_shell", None), ("point", None)):
        assert flow_exponent(scheme, 0, xi, SCHED, K).value == pytest.approx(
            ground_exponent(g, SCHED.dispersion(g), xi).value, rel=1e-13)


@pytest.mark.parametrize("scheme,K", [("daubechies", 2), ("daubechies", 4), ("haar", None), ("point", None)])
def test_flow_matches_real_space_oracle(scheme, K):
    g = build_geometry(1, 1.0, 2, 0)
    xi = PhaseField.delta(g)
    for M in (1, 3, 6):
        assert flow_exponent(scheme, M, xi, SCHED, K).value == pytest.approx(_oracle_flow(scheme, M, xi, K),
                                                                            rel=1e-12)


def test_momentum_transfer_mass_identity():
    g = build_geometry(1, 1.0, 2, 0)
    xi = _rand(g, 5)
    for M in range(0, 11):
        v = flow_exponent("momentum_transfer", M, xi, SCHED).value
        ref = ground_exponent(g, SCHED.dispersion(g, 2.0**-M), xi).value
        assert abs(v - ref) < 1e-12 * max(1.0, ref)


def test_wavelet_delta_flow_converges():
    g = build_geometry(1, 1.0, 2, 0)
    xi = PhaseField.delta(g)
    vals = [flow_exponent("daubechies", M, xi, SCHED, 2).value for M in range(13)]
    lim = limit_exponent("daubechies", xi, 1.0, K=2).value
    gaps = np.abs(np.array(vals) - lim)
    assert np.all(np.diff(gaps[2:]) < 0)
    assert gaps[-1] < 1e-4


def test_limit_exponent_self_consistency():
    g = build_geometry(1, 1.0, 2, 0)
    xi = _rand(g, 7)
    a = limit_exponent("daubechies", xi, 1.0, k_cutoff=2**12, K=3)
    b = limit_exponent("daubechies", xi, 1.0, k_cutoff=2**13, K=3)
    assert abs(a.value - b.value) <= a.tail


def test_limit_exponent_channel_separation():
    g = build_geometry(1, 1.0, 2, 0)
    q = _rand(g, 1, "q")
    p = _rand(g, 2, "p")
    both = PhaseField.real(g, q.q, p.p)
    kc = 2**12
    parts = limit_exponent("daubechies", q, 1.0, kc, K=4).value + limit_exponent("daubechies", p, 1.0, kc, K=4).value
    assert limit_exponent("daubechies", both, 1.0, kc, K=4).value == pytest.approx(parts, rel=1e-12)


def test_momentum_shell_limit_is_exact_sum():
    g = build_geometry(1, 1.0, 2, 0)
    lim = limit_exponent("momentum_shell", PhaseField.delta(g), 1.0)
    assert lim.tail == 0.0
    k = g.axis_momenta()
    assert lim.value == pytest.approx(0.25 * np.sum(1 / np.sqrt(k**2 + 1)) / 4)


def test_no_limit_for_box_schemes():
    g = build_geometry(1, 1.0, 2, 0)
    for scheme in ("blockspin", "point"):
        with pytest.raises(StateError):
            limit_exponent(scheme, PhaseField.delta(g), 1.0)


def test_embedding_route_agrees_and_scales():
    g = build_geometry(1, 1.0, 2, 0)
    xi = _rand(g, 8)
    a = limit_exponent("daubechies", xi, 1.0, K=3)
    b = continuum_exponent_via_embedding(xi, 1.0, K=3)
    assert abs(a.value - b.value) <= a.tail + b.tail + 1e-12
    assert continuum_exponent_via_embedding(PhaseField.real(g), 1.0, k_cutoff=64).value == 0.0
    t = 1.7
    c = continuum_exponent_via_embedding(t * xi, 1.0, k_cutoff=2**10, K=3).value
    assert c == pytest.approx(t**2 * continuum_exponent_via_embedding(xi, 1.0, k_cutoff=2**10, K=3).value)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), M=st.integers(0, 5),
       scheme=st.sampled_from(["daubechies", "haar", "point", "momentum_shell", "momentum_transfer"]))
def test_exponents_nonnegative(seed, M, scheme):
    g = build_geometry(1, 1.0, 2, 0)
    assert flow_exponent(scheme, M, _rand(g, seed), SCHED, 2 if scheme == "daubechies" else None).value >= 0


def _tf(L, kc, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(2 * kc + 1) + 1j * rng.standard_normal(2 * kc + 1)
    n = np.arange(-kc, kc + 1) * math.pi / L
    return TestFunction(L, c * np.exp(-n**2 / 8))


def test_test_function_is_real_and_evaluates():
    f = _tf(2.0, 4, 0)
    g = build_geometry(1, 1.0, 2, 3)
    x = g.sites().reshape(-1, 1)
    np.testing.assert_allclose(f.samples(g), f.evaluate(x), atol=1e-13)


def test_two_point_base_case_matches_polarization():
    g = build_geometry(1, 1.0, 2, 2)
    f, f2 = _tf(2.0, 3, 1), _tf(2.0, 3, 2)
    w = two_point_flow("point", g, 0, f, f2, SCHED)
    ref = polarization_two_point(g, SCHED.dispersion(g), f.samples(g), f2.samples(g))
    assert w.max_diff(ref) < 1e-12


def test_two_point_symmetry_and_phipi_flat():
    g = build_geometry(1, 1.0, 2, 1)
    f, f2 = _tf(2.0, 3, 3), _tf(2.0, 3, 4)
    a = two_point_flow("point", g, 3, f, f2, SCHED)
    b = two_point_flow("point", g, 3, f2, f, SCHED)
    assert a.phiphi == pytest.approx(b.phiphi, rel=1e-12)
    ws = [two_point_flow("point", g, M, f, f2, SCHED).phipi for M in range(4)]
    assert max(abs(w - ws[0]) for w in ws) < 1e-12


def test_two_point_limit_constant_function():
    L = 2.0
    c = np.zeros(3, complex)
    c[1] = 2 * L  # f = 1 on the torus
    f = TestFunction(L, c)
    lim = two_point_limit(f, f, 1.0)
    assert lim.phiphi == pytest.approx((2 * L) ** 2 / (2 * 2 * L))
    assert lim.phipi == pytest.approx(1j * (2 * L) ** 2 / (2 * 2 * L))
    assert two_point_limit(f, f, 3.0).phipi == lim.phipi


def test_blockspin_and_point_reach_the_same_limit():
    f, f2 = _tf(2.0, 3, 5), _tf(2.0, 3, 6)
    lim = two_point_limit(f, f2, 1.0)
    p = two_point_flow("point", build_geometry(1, 1.0, 2, 0), 12, f, f2, SCHED).rescaled(1.0, 1)
    b = two_point_flow("blockspin", build_geometry(1, 1.0, 2, 6), 12, f, f2, SCHED).rescaled(2.0**-6, 1)
    assert p.max_diff(lim) < 1e-4
    assert b.max_diff(lim) < 1e-4


def test_dispersion_converges_pointwise():
    g = build_geometry(1, 1.0, 2, 0)
    vals = dispersion_defects(g, SCHED, 12)
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-6
    assert vals[-1] / vals[-2] == pytest.approx(0.25, rel=0.01)


def test_dominated_envelope():
    g = build_geometry(1, 1.0, 2, 0)
    for alpha in (-0.5, 0.5):
        assert dominated_envelope_check(2, alpha, g, SCHED, M_max=8)["passed"]


def test_reports():
    g = build_geometry(1, 1.0, 2, 0)
    xi = PhaseField.delta(g)
    mt = convergence_report("momentum_transfer", xi, SCHED, 6)
    assert mt.passed and max(mt.column("defect")) < 1e-12
    # only the p channel diverges for box-function smearing
    bs = convergence_report("blockspin", PhaseField.delta(g, channel="p"), SCHED, 8, K=None)
    assert bs.meta["divergent"] and not bs.passed
    csv = bs.to_csv().splitlines()
    assert csv[0] == REPORT_HEADER
    assert csv[1].split(",")[: len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    assert json.loads(bs.to_json())["meta"]["scheme"] == "blockspin"
    tp = two_point_report("blockspin", build_geometry(1, 1.0, 2, 2), _tf(2.0, 2, 0), _tf(2.0, 2, 1), SCHED, 6, 1e-2)
    assert tp.checks["phipi_mass_independent"]["passed"]


def test_looks_divergent():
    assert looks_divergent([1, 2, 3, 4, 5])
    assert not looks_divergent([1, 1.5, 1.75, 1.875, 1.9375])


def test_report_rows_keep_extra_columns():
    rep = FlowReport()
    rep.add(scheme="x", value=1.0, channel="phiphi")
    assert "channel" in rep.to_csv().splitlines()[1]
