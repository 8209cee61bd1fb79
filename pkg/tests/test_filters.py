import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrg.filters import (FilterBank, FilterError, cascade_phi_hat, daubechies_taps, decay_envelope,
                         haar_phi_hat, high_pass, make_filter, momentum_shell_taps, phi_hat,
                         remainder_factor, shift_correlation, transfer_m0, verify_filter_identities)

# K=2 closed form (1 + sqrt3, 3 + sqrt3, 3 - sqrt3, 1 - sqrt3) / (4 sqrt2), the only hardcoded taps
D4 = np.array([1 + math.sqrt(3), 3 + math.sqrt(3), 3 - math.sqrt(3), 1 - math.sqrt(3)]) / (4 * math.sqrt(2))


def test_haar_taps():
    f = make_filter("haar")
    np.testing.assert_allclose(f.h(), [2**-0.5, 2**-0.5])
    assert f.h().sum() == pytest.approx(math.sqrt(2))
    assert (f.h() ** 2).sum() == pytest.approx(1.0)


def test_daubechies_two_matches_closed_form():
    np.testing.assert_allclose(daubechies_taps(2), D4, atol=1e-14)
    np.testing.assert_allclose(daubechies_taps(2), [0.482963, 0.836516, 0.224144, -0.129410], atol=1e-6)


def test_point_filter():
    f = make_filter("point", d=2)
    assert f.offsets == (0,)
    assert f.h()[0] ** f.d == pytest.approx(2.0)


@pytest.mark.parametrize("K", range(2, 11))
def test_daubechies_identities(K):
    rep = verify_filter_identities(make_filter("daubechies", K=K))
    assert rep.passed, rep.as_dict()


def test_haar_identities_exact():
    rep = verify_filter_identities(make_filter("haar"))
    assert max(rep.orthonormality, rep.normalization, rep.cross) < 1e-15


def test_corrupted_tap_is_flagged():
    f = make_filter("daubechies", K=3)
    vals = list(f.values)
    vals[2] += 1e-6
    rep = verify_filter_identities(f.with_values(vals))
    assert not rep.passed
    assert rep.orthonormality >= 1e-6 * 0.5


def test_point_filter_fails_orthonormality_honestly():
    rep = verify_filter_identities(make_filter("point"))
    assert rep.orthonormality == pytest.approx(1.0)
    assert not rep.passed


def test_high_pass_haar_and_daubechies():
    g = high_pass(make_filter("haar"))
    assert sorted(abs(v) for v in g.values) == pytest.approx([2**-0.5] * 2)
    assert sum(g.values) == pytest.approx(0.0, abs=1e-15)
    h = make_filter("daubechies", K=2)
    for shift in (-1, 0, 1, 3):
        g = high_pass(h, shift)
        assert len(g.offsets) == 4
        assert sum(g.values) == pytest.approx(0.0, abs=1e-14)
        for m in range(-2, 3):
            assert abs(shift_correlation(h.taps, g.taps, m)) < 1e-14


def test_high_pass_rejects_point():
    with pytest.raises(FilterError):
        high_pass(make_filter("point"))


def test_unknown_scheme_and_order():
    with pytest.raises(FilterError):
        make_filter("meyer")
    with pytest.raises(FilterError):
        make_filter("daubechies", K=11)
    with pytest.raises(FilterError):
        make_filter("daubechies")


def test_transfer_function_values():
    assert transfer_m0(make_filter("haar"), 0.0) == pytest.approx(1.0)
    assert abs(transfer_m0(make_filter("haar"), math.pi)) < 1e-16
    for K in (2, 3, 6):
        f = make_filter("daubechies", K=K)
        assert transfer_m0(f, 0.0) == pytest.approx(1.0)
        assert abs(transfer_m0(f, math.pi)) < 1e-12


def test_transfer_function_tensorizes():
    f1 = make_filter("daubechies", K=3)
    f2 = make_filter("daubechies", K=3, d=2)
    rng = np.random.default_rng(0)
    k = rng.uniform(-10, 10, size=(50, 2))
    np.testing.assert_allclose(transfer_m0(f2, k), transfer_m0(f1, k[:, 0]) * transfer_m0(f1, k[:, 1]),
                               atol=1e-14)


def test_quadrature_mirror_identity():
    # |m0(k)|^2 + |m0(k + pi)|^2 = 1 for orthonormal filters
    k = np.linspace(-7, 7, 301)
    for f in (make_filter("haar"), make_filter("daubechies", K=4)):
        s = np.abs(transfer_m0(f, k)) ** 2 + np.abs(transfer_m0(f, k + np.pi)) ** 2
        np.testing.assert_allclose(s, 1.0, atol=1e-13)


def test_momentum_shell_taps_transfer_is_indicator():
    r = 4
    offs, vals = momentum_shell_taps(r)
    f = make_filter("momentum_shell", r_fine=r)
    assert f.offsets == offs
    # on the fine grid kappa = pi n / r', m0 is 1 on the coarse Brillouin zone and 0 outside
    n = np.arange(-r, r)
    m = transfer_m0(f, np.pi * n / r)
    assert np.all(np.isclose(np.abs(m), 1.0) | np.isclose(np.abs(m), 0.0, atol=1e-12))
    assert np.sum(np.isclose(np.abs(m), 1.0)) == r


def test_cascade_zero_and_haar_limit():
    for f in (make_filter("haar"), make_filter("daubechies", K=2)):
        assert cascade_phi_hat(f, np.zeros(3), 5).value == pytest.approx(np.ones(3))
    k = np.linspace(-20, 20, 2001)
    c = cascade_phi_hat(make_filter("haar"), k, 40)
    assert np.abs(c.value - haar_phi_hat(k)).max() < 1e-10


def test_cascade_scaling_equation():
    f = make_filter("daubechies", K=3)
    k = np.linspace(-30, 30, 401)
    lhs = cascade_phi_hat(f, k, 30).value
    rhs = transfer_m0(f, k / 2) * cascade_phi_hat(f, k / 2, 29).value
    assert np.abs(lhs - rhs).max() < 1e-12


def test_cascade_tensorizes():
    f2 = make_filter("daubechies", K=2, d=2)
    f1 = make_filter("daubechies", K=2)
    k = np.random.default_rng(1).uniform(-8, 8, (20, 2))
    v2 = cascade_phi_hat(f2, k).value
    v1 = cascade_phi_hat(f1, k[:, 0]).value * cascade_phi_hat(f1, k[:, 1]).value
    np.testing.assert_allclose(v2, v1, atol=1e-14)


def test_remainder_bound_daubechies_two():
    f = make_filter("daubechies", K=2)
    k = np.linspace(-np.pi, np.pi, 10_000)
    assert np.abs(remainder_factor(f, k)).max() < 2 ** (2 - 1)


def test_remainder_factor_reconstructs_m0():
    f = make_filter("daubechies", K=5)
    k = np.linspace(-4, 4, 101)
    lhs = ((1 + np.exp(-1j * k)) / 2) ** 5 * remainder_factor(f, k)
    np.testing.assert_allclose(lhs, transfer_m0(f, k), atol=1e-13)


def test_decay_envelope_daubechies_two():
    dec = decay_envelope(make_filter("daubechies", K=2))
    # the sampled exponent sits near the known Sobolev-type value 1.339
    assert 1.25 < dec.rho < 1.45
    k = np.linspace(1, 1000, 3000)
    assert np.all(np.abs(phi_hat(make_filter("daubechies", K=2), k)) <= dec.bound(k) * (1 + 1e-12))


def test_orthonormal_translates_from_phi_hat():
    # sum_n |phi_hat(k + 2 pi n)|^2 = 1, truncated
    f = make_filter("daubechies", K=4)
    k = np.linspace(-np.pi, np.pi, 7)
    n = np.arange(-400, 401)
    s = (np.abs(phi_hat(f, k[:, None] + 2 * np.pi * n[None, :])) ** 2).sum(axis=1)
    np.testing.assert_allclose(s, 1.0, atol=1e-4)


def test_filter_round_trip_serialization():
    f = make_filter("daubechies", K=3, d=2)
    assert FilterBank.from_dict(f.to_dict()) == f


@settings(max_examples=25, deadline=None)
@given(K=st.integers(2, 10), m=st.integers(-6, 6))
def test_even_shift_orthonormality(K, m):
    h = make_filter("daubechies", K=K).taps
    assert abs(shift_correlation(h, h, m) - (1.0 if m == 0 else 0.0)) < 1e-10
