"""Low-pass filter banks, transfer functions and the cascade for the scaling function.

All finite filters are tensor products of a one-dimensional base filter, so
only the 1D taps are stored; ``d`` records how many axes they act on.
Transfer function convention: m0(kappa) = 2^(-1/2) sum_n h_n exp(-i n kappa)
per axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

FINITE_SCHEMES = ("haar", "blockspin", "daubechies", "point")
SCHEMES = FINITE_SCHEMES + ("momentum_shell", "momentum_transfer")
DAUBECHIES_K = range(2, 11)
CASCADE_DEPTH = 40


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class FilterBank:
    scheme: str
    offsets: tuple[int, ...]
    values: tuple
    d: int = 1
    K: int | None = None
    r_fine: int | None = None

    @property
    def level_dependent(self) -> bool:
        return self.scheme == "momentum_shell"

    @property
    def finite(self) -> bool:
        return self.scheme in FINITE_SCHEMES

    @property
    def r_max(self) -> float:
        if self.level_dependent:
            return math.inf
        return max(abs(n) for n in self.offsets)

    @property
    def taps(self) -> dict[int, complex | float]:
        return dict(zip(self.offsets, self.values))

    def tensor_taps(self) -> dict[tuple[int, ...], complex | float]:
        """Taps of the d-dimensional tensor-product filter."""
        out = {(): 1.0}
        for _ in range(self.d):
            out = {k + (n,): v * h for k, v in out.items() for n, h in self.taps.items()}
        return out

    def h(self) -> np.ndarray:
        return np.asarray(self.values)

    def n(self) -> np.ndarray:
        return np.asarray(self.offsets)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_dict(self) -> dict:
        def enc(v):
            return [v.real, v.imag] if isinstance(v, complex) else float(v)

        return {
            "scheme": self.scheme,
            "K": self.K,
            "d": self.d,
            "taps": [[int(n), enc(v)] for n, v in zip(self.offsets, self.values)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FilterBank":
        offsets, values = [], []
        for n, v in data["taps"]:
            offsets.append(int(n))
            values.append(complex(*v) if isinstance(v, list) else float(v))
        return cls(data["scheme"], tuple(offsets), tuple(values), int(data["d"]), data.get("K"))

    def with_values(self, values) -> "FilterBank":
        return FilterBank(self.scheme, self.offsets, tuple(values), self.d, self.K, self.r_fine)


@lru_cache(maxsize=None)
def daubechies_taps(K: int) -> tuple[float, ...]:
    """Minimum-phase Daubechies taps on 0..2K-1 by spectral factorization.

    |L(kappa)|^2 = P(sin^2(kappa/2)) with P(y) = sum_j C(K-1+j, j) y^j.
    Each root y of P gives a pair z, 1/z of z^2 - (2 - 4y) z + 1 = 0; the
    root inside the unit circle is kept.
    """
    if K not in DAUBECHIES_K:
        raise FilterError(f"Daubechies order K must be in 2..10, got {K}")
    P = [math.comb(K - 1 + j, j) for j in range(K)]
    yroots = np.roots(P[::-1])
    zs = []
    for y in yroots:
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zs.append(pair[np.argmin(np.abs(pair))])
    # L(w) proportional to prod (1 - z w) in w = exp(-i kappa), normalised to L(1) = 1
    L = np.array([1.0 + 0j])
    for z in zs:
        L = np.convolve(L, [1.0, -z])
    L = np.real_if_close(L / L.sum(), tol=1e6).real
    b = np.array([1.0])
    for _ in range(K):
        b = np.convolve(b, [0.5, 0.5])
    h = math.sqrt(2.0) * np.convolve(b, L)
    return tuple(float(v) for v in h)


def momentum_shell_taps(r_fine: int) -> tuple[tuple[int, ...], tuple[complex, ...]]:
    """Dirichlet-kernel taps for the sharp momentum cutoff.

    h_n = (2^(1/2) r')^(-1) sin(pi n / 2) / sin(pi n / (2 r')) exp(+i pi n / (2 r'))
    for n in -r'..r'-1 with r' = r_{N+1}.  At n = 0 the ratio is replaced by
    its limit r'; everywhere else the denominator is non-zero on this range.
    """
    n = np.arange(-r_fine, r_fine)
    ratio = np.empty(n.shape)
    nz = n != 0
    ratio[nz] = np.sin(np.pi * n[nz] / 2) / np.sin(np.pi * n[nz] / (2 * r_fine))
    ratio[~nz] = r_fine
    ratio[nz & (n % 2 == 0)] = 0.0
    h = ratio * np.exp(1j * np.pi * n / (2 * r_fine)) / (math.sqrt(2.0) * r_fine)
    return tuple(int(v) for v in n), tuple(complex(v) for v in h)


def make_filter(scheme: str, K: int | None = None, d: int = 1, r_fine: int | None = None) -> FilterBank:
    if d < 1:
        raise FilterError("d must be >= 1")
    if scheme in ("haar", "blockspin"):
        s = 1 / math.sqrt(2.0)
        return FilterBank(scheme, (0, 1), (s, s), d, 1)
    if scheme == "daubechies":
        if K is None:
            raise FilterError("daubechies needs an order K")
        taps = daubechies_taps(int(K))
        return FilterBank(scheme, tuple(range(len(taps))), taps, d, int(K))
    if scheme == "point":
        return FilterBank(scheme, (0,), (math.sqrt(2.0),), d)
    if scheme == "momentum_shell":
        if r_fine is None:
            raise FilterError("momentum_shell taps depend on the target level; pass r_fine = r_{N+1}")
        offs, vals = momentum_shell_taps(int(r_fine))
        return FilterBank(scheme, offs, vals, d, None, int(r_fine))
    if scheme == "momentum_transfer":
        raise FilterError("momentum_transfer has no real-space taps; it is defined in momentum space")
    raise FilterError(f"unknown scheme {scheme!r}; valid: {', '.join(SCHEMES)}")


def high_pass(f: FilterBank, shift: int = 0) -> FilterBank:
    """g_n = (-1)^n h_{1 - n + 2 shift}; shift = 0 is the plain conjugate variant."""
    if not f.finite or f.scheme == "point":
        raise FilterError(f"high-pass construction needs a finite orthonormal filter, got {f.scheme}")
    if f.d != 1:
        raise FilterError("high-pass filters are built from the 1D base filter (d=1)")
    taps = f.taps
    offs = sorted(1 - n + 2 * shift for n in taps)
    vals = [(-1) ** (n % 2) * taps[1 - n + 2 * shift] for n in offs]
    return FilterBank(f"{f.scheme}_highpass", tuple(offs), tuple(vals), 1, f.K)


def shift_correlation(a: dict, b: dict, m: int) -> complex:
    return sum(v * np.conj(b.get(n + 2 * m, 0.0)) for n, v in a.items())


@dataclass
class FilterReport:
    scheme: str
    orthonormality: float
    normalization: float
    moments: float
    cross: float
    tol: float = 1e-10

    @property
    def passed(self) -> bool:
        return max(self.orthonormality, self.normalization, self.moments, self.cross) < self.tol

    def as_dict(self) -> dict:
        return {"scheme": self.scheme, "orthonormality": self.orthonormality,
                "normalization": self.normalization, "moments": self.moments,
                "cross_orthogonality": self.cross, "passed": self.passed}


def verify_filter_identities(f: FilterBank, tol: float = 1e-10) -> FilterReport:
    """Defects of shift-orthonormality, normalization, vanishing moments and h/g orthogonality."""
    taps = f.taps
    span = max(taps) - min(taps)
    ms = range(-(span // 2) - 1, span // 2 + 2)
    # the point filter is a homothety, so it reports (and fails) this identity honestly
    ortho = max(abs(shift_correlation(taps, taps, m) - (1.0 if m == 0 else 0.0)) for m in ms)
    norm = abs(np.sum(f.h()) ** f.d - 2 ** (f.d / 2))
    moments = 0.0
    if f.scheme == "daubechies":
        n = f.n().astype(float)
        # relative to sum |n^j h_n| so high moments are not swamped by rounding
        moments = max(abs(np.sum((-1.0) ** f.n() * n**j * f.h())) / np.sum(np.abs(n**j * f.h()))
                      for j in range(f.K))
    cross = 0.0
    if f.finite and f.scheme != "point":
        g = high_pass(FilterBank(f.scheme, f.offsets, f.values, 1, f.K)).taps
        cross = max(abs(shift_correlation(taps, g, m)) for m in range(-span - 2, span + 3))
        cross = max(cross, max(abs(shift_correlation(g, g, m) - (1.0 if m == 0 else 0.0)) for m in ms))
    return FilterReport(f.scheme, float(ortho), float(norm), float(moments), float(cross), tol)


def transfer_m0(f: FilterBank, kappa) -> np.ndarray:
    """m0 on an array of dimensionless momenta; last axis has length d when d > 1."""
    kappa = np.asarray(kappa, dtype=float)
    if f.d == 1:
        return _m0_1d(f, kappa)
    if kappa.shape[-1] != f.d:
        raise FilterError(f"kappa must end in an axis of length {f.d}")
    out = np.ones(kappa.shape[:-1], complex)
    for j in range(f.d):
        out = out * _m0_1d(f, kappa[..., j])
    return out


def _m0_1d(f: FilterBank, kappa: np.ndarray) -> np.ndarray:
    if f.scheme == "momentum_transfer":
        raise FilterError("momentum_transfer has no transfer function")
    # Horner in w = exp(-i kappa) over the dense coefficient range
    lo, hi = min(f.offsets), max(f.offsets)
    coeffs = np.zeros(hi - lo + 1, complex)
    for n, h in zip(f.offsets, f.values):
        coeffs[n - lo] += h
    w = np.exp(-1j * kappa)
    out = np.full(kappa.shape, coeffs[-1])
    for c in coeffs[-2::-1]:
        out = out * w + c
    if lo:
        out = out * w**lo
    return out / math.sqrt(2.0)


def m0_axis(f: FilterBank, kappa: np.ndarray) -> np.ndarray:
    """One-axis transfer function (the tensor factor), for separable evaluation."""
    return _m0_1d(f, np.asarray(kappa, dtype=float))


@dataclass
class Cascade:
    value: np.ndarray
    truncation: np.ndarray
    depth: int


def cascade_phi_hat(f: FilterBank, kappa, depth: int = CASCADE_DEPTH) -> Cascade:
    """prod_{n=1..depth} m0(2^-n kappa), with |P_depth - P_{depth+1}| as truncation estimate.

    The loop stops early once every remaining factor is within 1e-16 of 1.
    """
    if depth < 1:
        raise FilterError("cascade depth must be >= 1")
    kappa = np.asarray(kappa, dtype=float)
    if f.d > 1:
        if kappa.shape[-1] != f.d:
            raise FilterError(f"kappa must end in an axis of length {f.d}")
        parts = [cascade_phi_hat(_base(f), kappa[..., j], depth) for j in range(f.d)]
        val = np.prod([c.value for c in parts], axis=0)
        trunc = sum(c.truncation for c in parts)
        return Cascade(val, trunc, depth)
    prod = np.ones(kappa.shape, complex)
    used = 0
    for n in range(1, depth + 1):
        m = _m0_1d(f, kappa / 2.0**n)
        prod *= m
        used = n
        if np.all(np.abs(m - 1) < 1e-16):
            break
    nxt = _m0_1d(f, kappa / 2.0 ** (used + 1))
    return Cascade(prod, np.abs(prod * (nxt - 1)), used)


def _base(f: FilterBank) -> FilterBank:
    return FilterBank(f.scheme, f.offsets, f.values, 1, f.K, f.r_fine)


def phi_hat(f: FilterBank, kappa, depth: int | None = None) -> np.ndarray:
    """Scaling-function transform with depth grown so that 2^-depth |kappa| stays below 2^-40."""
    kappa = np.asarray(kappa, dtype=float)
    if depth is None:
        top = float(np.abs(kappa).max(initial=1.0))
        depth = CASCADE_DEPTH + max(0, math.ceil(math.log2(max(top, 1.0))))
    return cascade_phi_hat(f, kappa, depth).value


def haar_phi_hat(kappa) -> np.ndarray:
    """Closed form (1 - e^{-i kappa}) / (i kappa) of the unit box transform."""
    kappa = np.asarray(kappa, dtype=float)
    out = np.ones(kappa.shape, complex)
    nz = kappa != 0
    out[nz] = (1 - np.exp(-1j * kappa[nz])) / (1j * kappa[nz])
    return out


def remainder_factor(f: FilterBank, kappa) -> np.ndarray:
    """m0 divided by ((1 + e^{-i kappa}) / 2)^K, evaluated through polynomial division."""
    if f.scheme != "daubechies":
        raise FilterError("the regularity factor is defined for Daubechies filters")
    coeffs = np.asarray(f.values) / math.sqrt(2.0)
    b = np.array([1.0])
    for _ in range(f.K):
        b = np.convolve(b, [0.5, 0.5])
    quot, rem = np.polynomial.polynomial.polydiv(coeffs, b)
    if np.abs(rem).max() > 1e-10:
        raise FilterError("filter does not carry the expected zero of order K at pi")
    w = np.exp(-1j * np.asarray(kappa, dtype=float))
    return np.polynomial.polynomial.polyval(w, quot)


@dataclass(frozen=True)
class Decay:
    rho: float
    C: float
    kappa_min: float
    kappa_max: float

    def bound(self, kappa) -> np.ndarray:
        k = np.abs(np.asarray(kappa, dtype=float))
        return np.minimum(1.0, self.C * (1 + k) ** (-self.rho))


_DECAY_CACHE: dict = {}


def decay_envelope(f: FilterBank, kappa_min: float = 1.0, kappa_max: float = 1e3,
                   samples: int = 20000) -> Decay:
    """Fit |phi_hat(kappa)| <= C (1 + |kappa|)^-rho on [kappa_min, kappa_max].

    rho is the regression slope of the per-octave maxima; C is the sampled
    maximum of |phi_hat| (1 + kappa)^rho, inflated by a factor of two.
    """
    key = (f.scheme, f.offsets, f.values, kappa_min, kappa_max, samples)
    if key in _DECAY_CACHE:
        return _DECAY_CACHE[key]
    base = _base(f)
    if f.scheme == "point":
        dec = Decay(0.0, 1.0, kappa_min, kappa_max)
    else:
        kap = np.geomspace(kappa_min, kappa_max, samples)
        mag = np.abs(phi_hat(base, kap))
        octaves = np.floor(np.log2(kap / kappa_min)).astype(int)
        xs, ys = [], []
        for o in np.unique(octaves):
            sel = octaves == o
            if sel.sum() < 8:
                continue
            i = np.argmax(mag[sel])
            xs.append(np.log(1 + kap[sel][i]))
            ys.append(np.log(mag[sel][i]))
        rho = -float(np.polyfit(xs, ys, 1)[0])
        C = 2.0 * float(np.max(mag * (1 + kap) ** rho))
        dec = Decay(rho, C, kappa_min, kappa_max)
    _DECAY_CACHE[key] = dec
    return dec
