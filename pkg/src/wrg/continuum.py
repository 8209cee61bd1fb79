"""Continuum one-particle data on the torus and the line.

Torus momenta are (pi/L) n with n in Z^d.  The torus norm is
(2L)^-d sum_k |gamma^-1/2 qhat + i gamma^1/2 phat|^2 and the line norm replaces
the sum by (2 pi)^-d times the integral over k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .filters import Decay, FilterBank, phi_hat

EULER_GAMMA = 0.5772156649015329


def gamma_continuum(k2, m: float) -> np.ndarray:
    """(k^2 + m^2)^(1/2) from squared momenta."""
    return np.sqrt(np.asarray(k2, dtype=float) + m * m)


def k_squared(d: int, dk: float, kc: int) -> np.ndarray:
    ax = (np.arange(-kc, kc + 1) * dk) ** 2
    out = np.zeros((2 * kc + 1,) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = -1
        out = out + ax.reshape(shape)
    return out


@dataclass
class TailModel:
    """Separable majorant for the part of a continuum field outside |n|_inf <= kc.

    |qhat(k)| <= qmax eps^(d/2) prod_j B(eps k_j), B the fitted decay bound of
    the scaling function; likewise for p.  Only the exponent-type sums are
    bounded, see ``tail``.
    """

    decay: Decay | None
    eps: float
    dk: float
    d: int
    qmax: float
    pmax: float

    def _axis_sums(self, kc: int, with_k: bool) -> tuple[float, float]:
        """Inner sum over |n| <= kc and outer sum over |n| > kc of the 1D weight."""
        a = self.eps * self.dk
        dec = self.decay
        n_in = np.arange(-kc, kc + 1)
        w_in = self.eps * dec.bound(a * n_in) ** 2
        if with_k:
            w_in = w_in * (1 + self.dk * np.abs(n_in))
        inner = float(np.sum(w_in))
        # explicit sum until the power law is below 1, then an integral majorant
        n0 = kc
        explicit = 0.0
        limit = (dec.C ** (1 / dec.rho) - 1) / a if dec.C > 1 else 0.0
        if limit > n0:
            n1 = int(math.ceil(limit))
            ns = np.arange(n0 + 1, n1 + 1)
            w = self.eps * dec.bound(a * ns) ** 2
            if with_k:
                w = w * (1 + self.dk * ns)
            explicit = float(np.sum(w))
            n0 = n1
        rho = dec.rho
        if with_k:
            if rho <= 1:
                return inner, math.inf
            tail = self.eps * dec.C**2 * max(1.0, 1 / self.eps) * (1 + a * n0) ** (2 - 2 * rho) / (a * (2 * rho - 2))
        else:
            if rho <= 0.5:
                return inner, math.inf
            tail = self.eps * dec.C**2 * (1 + a * n0) ** (1 - 2 * rho) / (a * (2 * rho - 1))
        return inner, 2 * (explicit + tail)

    def tail(self, m: float, kc: int, L: float) -> float:
        """Bound on (2L)^-d sum_{outside} (gamma^-1 |qhat|^2 + gamma |phat|^2)."""
        if self.decay is None:
            return math.inf if (self.qmax or self.pmax) else 0.0
        total = 0.0
        if self.qmax:
            inner, outer = self._axis_sums(kc, False)
            total += self.qmax**2 / m * ((inner + outer) ** self.d - inner**self.d)
        if self.pmax:
            inner, outer = self._axis_sums(kc, True)
            total += self.pmax**2 * max(1.0, m) * ((inner + outer) ** self.d - inner**self.d)
        return total / (2 * L) ** self.d


@dataclass
class ContinuumField:
    """Torus Fourier data on the box |n_j| <= k_cutoff, k = (pi/L) n."""

    L: float
    d: int
    k_cutoff: int
    qhat: np.ndarray
    phat: np.ndarray
    tail_model: TailModel | None = None
    trusted: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def dk(self) -> float:
        return math.pi / self.L

    def k2(self) -> np.ndarray:
        return k_squared(self.d, self.dk, self.k_cutoff)

    def tail(self, m: float) -> float:
        return 0.0 if self.tail_model is None else self.tail_model.tail(m, self.k_cutoff, self.L)

    def __sub__(self, other: "ContinuumField") -> "ContinuumField":
        if (self.L, self.d, self.k_cutoff) != (other.L, other.d, other.k_cutoff):
            raise ValueError("continuum fields live on different grids")
        return ContinuumField(self.L, self.d, self.k_cutoff, self.qhat - other.qhat, self.phat - other.phat)


@dataclass(frozen=True)
class ContinuumNormSpec:
    m: float
    L: float | None = None
    k_cutoff: int | None = None
    k_max: float | None = None
    panels: int = 400
    order: int = 16


@dataclass(frozen=True)
class NormValue:
    value: float
    error: float


def _fsum(a: np.ndarray) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel())


def torus_norm_sq(cf: ContinuumField, m: float) -> float:
    g = gamma_continuum(cf.k2(), m)
    z = cf.qhat / np.sqrt(g) + 1j * np.sqrt(g) * cf.phat
    return _fsum(np.abs(z) ** 2) / (2 * cf.L) ** cf.d


def norm_continuum(spec: ContinuumNormSpec, xi) -> NormValue:
    """Squared one-particle norm with an error estimate.

    Finite volume takes a ContinuumField (truncated torus data); infinite
    volume takes a LineField and integrates over [-k_max, k_max]^d.
    """
    if spec.L is not None:
        if not isinstance(xi, ContinuumField):
            raise TypeError("finite-volume norms need a ContinuumField")
        if spec.k_cutoff is not None and spec.k_cutoff > xi.k_cutoff:
            raise ValueError(f"field carries coefficients up to {xi.k_cutoff}, spec asks for {spec.k_cutoff}")
        cf = xi if spec.k_cutoff in (None, xi.k_cutoff) else _restrict(xi, spec.k_cutoff)
        return NormValue(torus_norm_sq(cf, spec.m), cf.tail(spec.m))
    if not isinstance(xi, LineField):
        raise TypeError("infinite-volume norms need a LineField")
    k_max = spec.k_max if spec.k_max is not None else xi.default_k_max()
    return line_norm_sq(xi, spec.m, k_max, spec.panels, spec.order)


def _restrict(cf: ContinuumField, kc: int) -> ContinuumField:
    off = cf.k_cutoff - kc
    sl = (slice(off, off + 2 * kc + 1),) * cf.d
    return ContinuumField(cf.L, cf.d, kc, cf.qhat[sl], cf.phat[sl], cf.tail_model)


@dataclass
class LineField:
    """Fourier data on R^d given by callables, with a box support in position space.

    ``amplitude`` = (A_q, A_p) promises |qhat(k)| <= A_q prod_j B(scale k_j) and
    likewise for phat, where B is ``decay.bound``.  Tail bounds need both.
    """

    d: int
    qhat: Callable[[np.ndarray], np.ndarray]
    phat: Callable[[np.ndarray], np.ndarray]
    support: tuple[tuple[float, float], ...]
    scale: float = 1.0
    decay: Decay | None = None
    amplitude: tuple[float, float] | None = None

    def default_k_max(self) -> float:
        return 400.0 / self.scale

    def integrand(self, k: np.ndarray, m: float) -> np.ndarray:
        """|gamma^-1/2 qhat + i gamma^1/2 phat|^2 at momenta k of shape (..., d)."""
        k = np.asarray(k, dtype=float)
        g = gamma_continuum(np.sum(k * k, axis=-1), m)
        z = self.qhat(k) / np.sqrt(g) + 1j * np.sqrt(g) * self.phat(k)
        return np.abs(z) ** 2

    def on_torus(self, L: float, kc: int) -> ContinuumField:
        dk = math.pi / L
        ax = np.arange(-kc, kc + 1) * dk
        k = np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), axis=-1)
        return ContinuumField(L, self.d, kc, self.qhat(k), self.phat(k))

    def width(self) -> float:
        return max(b - a for a, b in self.support)

    def inside(self, L: float) -> bool:
        return all(-L < a and b < L for a, b in self.support)

    def scaled(self, t: float) -> "LineField":
        amp = None if self.amplitude is None else (abs(t) * self.amplitude[0], abs(t) * self.amplitude[1])
        return LineField(self.d, lambda k: t * self.qhat(k), lambda k: t * self.phat(k), self.support,
                         self.scale, self.decay, amp)


@dataclass
class WaveletSmeared:
    """Position-space description of R^N_infinity of a lattice field, usable on any volume."""

    filt: FilterBank
    eps: float
    sites: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def line_field(self) -> LineField:
        from .filters import decay_envelope

        sites = np.asarray(self.sites).reshape(len(self.q), -1)
        d = sites.shape[1]
        eps = self.eps
        f = FilterBank(self.filt.scheme, self.filt.offsets, self.filt.values, 1, self.filt.K)

        def transform(weights):
            def fn(k):
                k = np.asarray(k, dtype=float)
                phase = np.exp(-1j * (k @ (sites.T * eps)))
                lat = eps ** (d / 2) * phase @ weights
                ph = np.ones(k.shape[:-1], complex)
                for j in range(d):
                    ph = ph * phi_hat(f, eps * k[..., j])
                return eps ** (d / 2) * ph * lat
            return fn

        lo = min(self.filt.offsets) * eps
        hi = max(self.filt.offsets) * eps
        smin = sites.min(axis=0) * eps + lo
        smax = sites.max(axis=0) * eps + hi
        support = tuple((float(a), float(b)) for a, b in zip(smin, smax))
        amp = (eps**d * float(np.abs(self.q).sum()), eps**d * float(np.abs(self.p).sum()))
        return LineField(d, transform(np.asarray(self.q, float)), transform(np.asarray(self.p, float)),
                         support, eps, decay_envelope(self.filt), amp)


def line_norm_sq(xi: LineField, m: float, k_max: float, panels: int = 400, order: int = 16) -> NormValue:
    """(2 pi)^-d times composite Gauss-Legendre over [-k_max, k_max]^d.

    Error estimate: difference to the same rule on half as many panels, plus the
    decay-bound tail beyond k_max when the field carries one.
    """
    fine = _gl_integral(xi, m, k_max, panels, order)
    coarse = _gl_integral(xi, m, k_max, max(1, panels // 2), order)
    err = abs(fine - coarse) / (2 * math.pi) ** xi.d
    err += _line_tail(xi, m, k_max)
    return NormValue(fine / (2 * math.pi) ** xi.d, err)


def _gl_nodes(a: float, b: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _gl_integral(xi: LineField, m: float, k_max: float, panels: int, order: int) -> float:
    nodes, weights = _gl_nodes(-k_max, k_max, panels, order)
    if xi.d == 1:
        vals = xi.integrand(nodes[:, None], m)
        return math.fsum(vals * weights)
    if xi.d == 2:
        total = []
        for i in range(0, nodes.size, 512):
            kx = nodes[i:i + 512]
            k = np.stack(np.meshgrid(kx, nodes, indexing="ij"), axis=-1)
            vals = xi.integrand(k, m)
            total.append(float(weights[i:i + 512] @ vals @ weights))
        return math.fsum(total)
    raise NotImplementedError("line integrals are implemented for d <= 2")


def _line_tail(xi: LineField, m: float, k_max: float) -> float:
    """(2 pi)^-1 times a majorant of the integrand over |k| > k_max (d = 1 only).

    Uses |a + b|^2 <= 2|a|^2 + 2|b|^2, gamma <= |k| + m and the decay bound
    B(kappa) <= C (1 + |kappa|)^-rho.  Infinite when no bound is available.
    """
    if xi.decay is None or xi.amplitude is None or xi.d != 1 or k_max <= 0:
        return math.inf
    aq, ap = xi.amplitude
    return _power_tail(aq, ap, xi.decay.C, xi.decay.rho, xi.scale, m, k_max) / (2 * math.pi)


def _power_tail(aq, ap, C, rho, a, m, K) -> float:
    """2 * int_K^inf 2 C^2 (1 + a k)^(-2 rho) (aq^2 / m + ap^2 (k + m)) dk."""
    u = 1 + a * K
    if ap and rho <= 1:
        return math.inf
    if rho <= 0.5:
        return math.inf
    t0 = u ** (1 - 2 * rho) / (a * (2 * rho - 1))
    t1 = u ** (2 - 2 * rho) / (a * a * (2 * rho - 2)) if ap else 0.0
    return 4 * C * C * (aq * aq / m * t0 + ap * ap * (t1 + m * t0))


# --- modified Bessel functions of the second kind ---------------------------

SERIES_MAX = 2.0
ASYMPTOTIC_MIN = 25.0


def _series(order: int, z: np.ndarray) -> np.ndarray:
    y = z * z / 4
    lz = np.log(z / 2)
    term = np.ones_like(z)
    psi1 = -EULER_GAMMA
    if order == 0:
        i0 = np.zeros_like(z)
        acc = np.zeros_like(z)
        for k in range(60):
            if k > 0:
                term = term * y / (k * k)
                psi1 += 1.0 / k
            i0 += term
            acc += psi1 * term
        return -lz * i0 + acc
    # order 1: 1/z + ln(z/2) I1(z) - (z/4) sum (psi(k+1) + psi(k+2)) y^k / (k! (k+1)!)
    psi2 = psi1 + 1.0
    i1 = np.zeros_like(z)
    acc = np.zeros_like(z)
    for k in range(60):
        if k > 0:
            term = term * y / (k * (k + 1))
            psi1 += 1.0 / k
            psi2 += 1.0 / (k + 1)
        i1 += term
        acc += (psi1 + psi2) * term
    return 1 / z + lz * (z / 2) * i1 - (z / 4) * acc


def _asymptotic(order: int, z: np.ndarray) -> np.ndarray:
    mu = 4.0 * order * order
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(1, 30):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8 * z)
        total += term
        if np.all(np.abs(term) < 1e-17 * np.abs(total)):
            break
    return np.sqrt(np.pi / (2 * z)) * np.exp(-z) * total


def bessel_quadrature(order: int, z: np.ndarray, h: float = 0.05) -> np.ndarray:
    """Trapezoid rule for int_0^inf exp(-z cosh t) cosh(order t) dt (doubly exponential decay)."""
    z = np.asarray(z, dtype=float)
    t_max = math.acosh(max(1.0, 745.0 / max(float(z.min(initial=1.0)), 1e-300)))
    t = np.arange(0.0, t_max + h, h)
    w = np.full(t.shape, h)
    w[0] = h / 2
    vals = np.exp(-np.multiply.outer(z, np.cosh(t))) * np.cosh(order * t)
    return vals @ w


def bessel(order: int, z) -> np.ndarray:
    """K_0 or K_1 for z > 0: series below 2, quadrature in between, asymptotic above 25."""
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are provided")
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("Bessel K needs z > 0")
    out = np.empty(z.shape)
    lo = z <= SERIES_MAX
    hi = z >= ASYMPTOTIC_MIN
    mid = ~(lo | hi)
    if lo.any():
        out[lo] = _series(order, z[lo])
    if hi.any():
        out[hi] = _asymptotic(order, z[hi])
    if mid.any():
        out[mid] = bessel_quadrature(order, z[mid])
    return out if out.ndim else float(out)


# K_nu(z) <= exp(-z) from these arguments on (checked in the tests)
EXP_ENVELOPE_FROM = {0: 1.5, 1: 2.5}
KERNEL_TAIL = 1e-12


def _image_count(L: float, m: float, reach: float, order: int) -> int:
    """Images n = 1..n_max such that the exp(-z) envelope bounds the rest below KERNEL_TAIL."""
    n = 1
    while True:
        z = m * (2 * L * (n + 1) - reach)
        if z >= EXP_ENVELOPE_FROM[order]:
            # two signs, geometric series in exp(-2 L m)
            lead = 2 * math.exp(-z) / (1 - math.exp(-2 * L * m))
            if order == 1:
                lead *= m / (2 * L * (n + 1) - reach)
            if 2 * lead < KERNEL_TAIL:
                return n
        n += 1


def image_kernel(order: int, s, L: float, m: float, reach: float | None = None) -> np.ndarray:
    """Sum over images n != 0 of the free line kernel at s - 2 L n.

    order 0: -2 K0(m|u|), the image part of the k-space difference for gamma^-1.
    order 1: +2 m K1(m|u|) / |u|, the same for gamma.
    These are minus the Fourier transforms of gamma^-1 and gamma on the line,
    which is what Poisson summation puts in front of the image sum.
    """
    s = np.asarray(s, dtype=float)
    if reach is None:
        reach = float(np.abs(s).max(initial=0.0))
    if reach >= 2 * L:
        raise ValueError("separations must stay below the period 2L")
    n_max = _image_count(L, m, reach, order)
    out = np.zeros(s.shape)
    for n in range(1, n_max + 1):
        for u in (np.abs(s - 2 * L * n), np.abs(s + 2 * L * n)):
            if order == 0:
                out -= 2 * bessel(0, m * u)
            else:
                out += 2 * m * bessel(1, m * u) / u
    return out


@dataclass(frozen=True)
class BSpline:
    """amp * (1/w) B_n((x - center)/w) with B_n the centered cardinal B-spline.

    Compactly supported, C^(n-2), with Fourier transform
    amp * exp(-i k center) * sinc(k w / 2)^n.
    """

    center: float
    width: float
    order: int = 6
    amp: float = 1.0
    d: int = 1

    @property
    def support(self) -> tuple[float, float]:
        h = self.order * self.width / 2
        return (self.center - h, self.center + h)

    def knots(self) -> np.ndarray:
        lo = self.support[0]
        return lo + self.width * np.arange(self.order + 1)

    def __call__(self, x) -> np.ndarray:
        n = self.order
        t = (np.asarray(x, dtype=float) - self.center) / self.width + n / 2
        out = np.zeros(t.shape)
        for j in range(n + 1):
            out += (-1) ** j * math.comb(n, j) * np.maximum(t - j, 0.0) ** (n - 1)
        out = np.where((t > 0) & (t < n), out, 0.0)
        return self.amp * out / (math.factorial(n - 1) * self.width)

    def ft(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return self.amp * np.exp(-1j * k * self.center) * np.sinc(k * self.width / (2 * math.pi)) ** self.order

    def bound(self, k) -> np.ndarray:
        """|ft(k)| <= amp (2 / (w |k|))^n."""
        return self.amp * (2 / (self.width * np.abs(k))) ** self.order


def _spline_nodes(f: BSpline, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    kn = f.knots()
    mid = 0.5 * (kn[1:] + kn[:-1])
    half = 0.5 * (kn[1:] - kn[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _kernel_pairing(xi: BSpline, eta: BSpline, L: float, m: float, order: int, gl: int) -> float:
    x, wx = _spline_nodes(xi, gl)
    y, wy = _spline_nodes(eta, gl)
    s = x[:, None] - y[None, :]
    Q = image_kernel(order, s, L, m)
    return float((wx * xi(x)) @ Q @ (wy * eta(y)))


def _momentum_defect(xi: BSpline, eta: BSpline, L: float, m: float, power: int, panels_per_period: int = 4,
                     gl: int = 16, tail_target: float = 1e-13):
    """int dk gamma^power xi^ conj(eta^) - (pi/L) sum_k of the same, with an error estimate."""
    n = min(xi.order, eta.order)
    w = max(xi.width, eta.width)
    amp = xi.amp * eta.amp * (2 / w) ** (2 * n)

    def tail(K):
        # |F| <= amp k^-2n (k + m)^power on k > K, both signs, both sides
        if power < 0:
            one = amp * K ** (1 - 2 * n) / (m * (2 * n - 1))
        else:
            one = amp * (K ** (2 - 2 * n) / (2 * n - 2) + m * K ** (1 - 2 * n) / (2 * n - 1))
        return 4 * one

    K = math.pi / L
    while tail(K) > tail_target:
        K *= 2
    kc = int(round(K * L / math.pi))

    def F(k):
        g = gamma_continuum(k * k, m) ** power
        return (g * xi.ft(k) * np.conj(eta.ft(k))).real

    reach = abs(xi.center - eta.center) + (xi.order * xi.width + eta.order * eta.width) / 2
    h = 2 * math.pi / max(reach, 1e-3) / panels_per_period
    panels = max(8, int(math.ceil(K / h)))

    def integral(p):
        nodes, weights = _gl_nodes(0.0, K, p, gl)
        return 2 * math.fsum(F(nodes) * weights)

    fine = integral(panels)
    coarse = integral(max(1, panels // 2))
    ks = np.arange(1, kc + 1) * (math.pi / L)
    total = (math.pi / L) * (F(np.zeros(1))[0] + 2 * math.fsum(F(ks)))
    value = fine - total
    err = abs(fine - coarse) + tail(K) + 64 * np.finfo(float).eps * (abs(fine) + abs(total))
    return value, err


def poisson_defect_check(xi: BSpline, eta: BSpline, L: float, m: float, gl: int = 16) -> dict:
    """Both sides of the image-sum identities for gamma^-1 ("minus") and gamma ("plus").

    lhs: line integral minus torus Riemann sum of gamma^-+1 xi^ conj(eta^).
    rhs: double position integral of xi, eta against the image kernels.
    ``quoted_*`` evaluates the kernels as +sum 2 K0 and -sum (m/|u|) K1, the
    normalisation they are often quoted with; ``quoted_ratio_*`` = lhs / quoted.
    """
    for f in (xi, eta):
        if getattr(f, "d", 1) != 1:
            raise NotImplementedError("image-kernel identities are implemented for d = 1 only")
        lo, hi = f.support
        if not (-L < lo and hi < L):
            raise ValueError(f"support {f.support} is not inside (-{L}, {L})")
    out = {}
    for name, power, order in (("minus", -1, 0), ("plus", 1, 1)):
        lhs, lerr = _momentum_defect(xi, eta, L, m, power)
        rhs = _kernel_pairing(xi, eta, L, m, order, gl)
        rerr = abs(rhs - _kernel_pairing(xi, eta, L, m, order, gl - 4)) + 1e-13
        quoted = -rhs if order == 0 else -rhs / 2
        out[f"lhs_{name}"] = lhs
        out[f"lhs_{name}_error"] = lerr
        out[f"rhs_{name}"] = rhs
        out[f"rhs_{name}_error"] = rerr
        out[f"quoted_{name}"] = quoted
        out[f"quoted_ratio_{name}"] = lhs / quoted if quoted else math.nan
    return out


def _torus_exponent(xi: LineField, L: float, m: float, K: float) -> float:
    """Quarter torus norm over |k| <= K, with half weight at the cut (needs K on the grid)."""
    dk = math.pi / L
    kc = int(round(K / dk))
    ks = np.arange(-kc, kc + 1) * dk
    vals = xi.integrand(ks[:, None], m)
    # trapezoid end weights so that the sum and the integral share the cut
    vals[0] *= 0.5
    vals[-1] *= 0.5
    return math.fsum(vals) / (2 * L) / 4


def _line_exponent(xi: LineField, m: float, K: float, gl: int = 16, panels_per_period: float = 1.0):
    h = 2 * math.pi / max(xi.width(), 1e-3) / panels_per_period
    panels = max(8, int(math.ceil(2 * K / h)))
    line = line_norm_sq(xi, m, K, panels, gl)
    return line.value / 4, line.error / 4


def _on_grid(K: float, L_list) -> float:
    """Smallest cut >= K that is a multiple of pi / L for every L in the list.

    K = pi j works when j L is an integer for all L, i.e. j is a multiple of
    the common denominator of the (rational) box sizes.
    """
    from fractions import Fraction

    den = 1
    for L in L_list:
        q = Fraction(L).limit_denominator(10**6).denominator
        den = den * q // math.gcd(den, q)
    step = math.pi * den
    return step * math.ceil(K / step - 1e-12)


MAX_CUT_DOUBLINGS = 16


def _cut_for(xi: LineField, m: float, target: float, start: float) -> float:
    K = start
    for _ in range(MAX_CUT_DOUBLINGS):
        if _line_tail(xi, m, K) < target:
            return K
        K *= 2
    raise ValueError(f"decay bound too weak: tail above {target:g} even at |k| = {K:g}; "
                     "use a smoother filter or pass K explicitly")


def infinite_volume_defect(xi: LineField, L_list, m: float = 1.0, tol: float = 1e-4, K: float | None = None):
    """|torus exponent - line exponent| for each L, with the same momentum cut.

    The cut K is chosen so that the certified tail beyond it is below tol / 100;
    both truncations are then bounded by that tail (the sum via a shifted cut).
    """
    from .states import FlowReport

    L_list = [float(L) for L in L_list]
    if not xi.inside(min(L_list)):
        raise ValueError(f"support {xi.support} is not inside (-{min(L_list)}, {min(L_list)})")
    if K is None:
        K = _cut_for(xi, m, tol / 100, 64.0 / xi.scale)
    K = _on_grid(K, L_list)
    line, qerr = _line_exponent(xi, m, K)
    rep = FlowReport(meta={"m": m, "k_cut": K, "support": [list(s) for s in xi.support], "line": line})
    defects = []
    for L in L_list:
        torus = _torus_exponent(xi, L, m, K)
        tail = (_line_tail(xi, m, K - math.pi / L) + _line_tail(xi, m, K)) / 4
        dfc = abs(torus - line)
        defects.append(dfc)
        rep.add(scheme="line", d=xi.d, N=None, M=None, value=dfc, defect=dfc, tail_bound=tail + qerr,
                L=L, torus=torus, line=line)
    mono = all(b <= a for a, b in zip(defects, defects[1:]))
    rep.checks["monotone"] = {"passed": bool(mono)}
    rep.checks["terminal"] = {"passed": bool(defects[-1] < tol), "value": defects[-1], "tol": tol}
    return rep


def norm_equivalence(fields, L: float, m: float = 1.0, K: float | None = None) -> dict:
    """Ratios ||xi||_L / ||xi||_inf over a family of local fields; kappa bounds them both ways."""
    ratios = []
    for xi in fields:
        if not xi.inside(L):
            raise ValueError("fields must be supported inside (-L, L)")
        cut = _on_grid(K if K is not None else _cut_for(xi, m, 1e-6, 64.0 / xi.scale), [L])
        torus = _torus_exponent(xi, L, m, cut)
        line, _ = _line_exponent(xi, m, cut)
        ratios.append(math.sqrt(torus / line))
    r = np.array(ratios)
    return {"ratios": r, "kappa": float(max(r.max(), 1 / r.min()))}
