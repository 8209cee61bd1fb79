"""Dyadic periodic lattices, their dual lattices and the phase space on top.

Sites of the level-N lattice are integer multiples of eps_N in
{-r_N, ..., r_N - 1}^d.  Arrays are stored with axis index i holding the
integer coordinate i - r_N, so both the position lattice and the dual
lattice are laid out lexicographically with the most significant axis
first (numpy C order).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

Space = Literal["real", "momentum"]


class GeometryError(ValueError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class LatticeGeometry:
    d: int
    eps: float
    r: int
    level: int = 0

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise GeometryError(f"dimension d must be a positive integer, got {self.d!r}")
        if not self.eps > 0:
            raise GeometryError(f"base spacing eps must be positive, got {self.eps!r}")
        if not isinstance(self.r, (int, np.integer)) or not _is_power_of_two(int(self.r)):
            raise GeometryError(f"base radius r must be a power of two (r = 2^j, j >= 0), got {self.r!r}")
        if not isinstance(self.level, (int, np.integer)) or self.level < 0:
            raise GeometryError(f"level must be a non-negative integer, got {self.level!r}")
        if self.r_n == 1:
            raise GeometryError("lattices with r_N = 1 (two sites per axis) are rejected")

    @property
    def eps_n(self) -> float:
        return self.eps / 2**self.level

    @property
    def r_n(self) -> int:
        return int(self.r) << self.level

    @property
    def L(self) -> float:
        return self.eps * self.r

    @property
    def side(self) -> int:
        return 2 * self.r_n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def dk(self) -> float:
        """Dual lattice spacing pi / L."""
        return np.pi / self.L

    def at_level(self, level: int) -> "LatticeGeometry":
        return LatticeGeometry(self.d, self.eps, self.r, level)

    def same_torus(self, other: "LatticeGeometry") -> bool:
        return self.d == other.d and self.eps == other.eps and self.r == other.r

    def axis_indices(self) -> np.ndarray:
        return np.arange(-self.r_n, self.r_n)

    def site_indices(self) -> np.ndarray:
        """Integer coordinates of all sites, shape (n_sites, d), lexicographic."""
        ax = self.axis_indices()
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def sites(self) -> np.ndarray:
        return self.site_indices() * self.eps_n

    def momentum_indices(self) -> np.ndarray:
        return self.site_indices()

    def momenta(self) -> np.ndarray:
        return self.momentum_indices() * self.dk

    def axis_momenta(self) -> np.ndarray:
        return self.axis_indices() * self.dk

    def momentum_grid(self) -> list[np.ndarray]:
        """Broadcastable per-axis momentum arrays (open mesh)."""
        ax = self.axis_momenta()
        return list(np.ix_(*([ax] * self.d)))

    def to_index(self, a) -> np.ndarray:
        """Convert a physical lattice vector to integer steps, rejecting off-lattice input."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if a.shape != (self.d,):
            raise GeometryError(f"expected a {self.d}-vector, got shape {a.shape}")
        steps = a / self.eps_n
        idx = np.rint(steps)
        if np.any(np.abs(steps - idx) > 1e-9 * np.maximum(1.0, np.abs(steps))):
            raise GeometryError(f"vector {a.tolist()} is not on the lattice with spacing {self.eps_n}")
        return idx.astype(np.int64)


def reflect(arr: np.ndarray, axes=None) -> np.ndarray:
    """Array of values at -k (or -x) in the centred layout, indices taken mod the side length."""
    axes = tuple(range(arr.ndim)) if axes is None else axes
    return np.roll(np.flip(arr, axes), 1, axes)


def _fft(arr: np.ndarray, inverse: bool) -> np.ndarray:
    a = np.fft.ifftshift(arr)
    a = np.fft.ifftn(a) if inverse else np.fft.fftn(a)
    return np.fft.fftshift(a)


def _direct(arr: np.ndarray, inverse: bool) -> np.ndarray:
    n = arr.shape[0]
    r = n // 2
    j = np.arange(-r, r)
    sign = 1.0 if inverse else -1.0
    mat = np.exp(sign * 1j * np.pi * np.outer(j, j) / r)
    out = arr.astype(complex)
    for ax in range(arr.ndim):
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [ax])), 0, ax)
    if inverse:
        out /= n**arr.ndim
    return out


def fourier(arr: np.ndarray, inverse: bool = False, method: str = "fft") -> np.ndarray:
    """Raw lattice transform.

    forward: sum_x a(x) exp(-i k.x); inverse: (2 r_N)^-d sum_k a(k) exp(i k.x).
    ``method="direct"`` evaluates the O(n^2) sums and is kept as a reference.
    """
    if method == "fft":
        return _fft(arr, inverse)
    if method == "direct":
        return _direct(arr, inverse)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class PhaseField:
    """A one-particle vector (q, p) on a lattice, in real or momentum space.

    In momentum space the components are qhat = eps_N^(d/2) F[q] and likewise
    for p.  Real-space components are real for every map in this package except
    the momentum cutoff, whose Nyquist bookkeeping produces complex values.
    """

    geometry: LatticeGeometry
    q: np.ndarray
    p: np.ndarray
    space: Space = "real"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.space not in ("real", "momentum"):
            raise ValueError(f"space must be 'real' or 'momentum', got {self.space!r}")
        shape = self.geometry.shape
        for name in ("q", "p"):
            a = np.asarray(getattr(self, name))
            if a.shape != shape:
                raise GeometryError(f"{name} has shape {a.shape}, expected {shape}")
            object.__setattr__(self, name, a)

    @classmethod
    def real(cls, geometry, q=None, p=None) -> "PhaseField":
        z = np.zeros(geometry.shape)
        return cls(geometry, z if q is None else np.asarray(q), z if p is None else np.asarray(p), "real")

    @classmethod
    def momentum(cls, geometry, qhat=None, phat=None) -> "PhaseField":
        z = np.zeros(geometry.shape, complex)
        return cls(geometry, z if qhat is None else np.asarray(qhat, complex),
                   z if phat is None else np.asarray(phat, complex), "momentum")

    @classmethod
    def delta(cls, geometry, site=None, channel: str = "q") -> "PhaseField":
        """Unit field at ``site`` (integer coordinates, default origin)."""
        site = np.zeros(geometry.d, int) if site is None else np.asarray(site)
        a = np.zeros(geometry.shape)
        a[tuple((site + geometry.r_n) % geometry.side)] = 1.0
        return cls.real(geometry, q=a) if channel == "q" else cls.real(geometry, p=a)

    @classmethod
    def random(cls, geometry, rng, channels: str = "qp") -> "PhaseField":
        q = rng.standard_normal(geometry.shape) if "q" in channels else None
        p = rng.standard_normal(geometry.shape) if "p" in channels else None
        return cls.real(geometry, q, p)

    @property
    def level(self) -> int:
        return self.geometry.level

    def to_momentum(self, method: str = "fft") -> "PhaseField":
        return self if self.space == "momentum" else dft(self, "forward", method)

    def to_real(self, method: str = "fft") -> "PhaseField":
        return self if self.space == "real" else dft(self, "inverse", method)

    def is_real(self, tol: float = 1e-12) -> bool:
        f = self.to_real()
        scale = max(1.0, np.abs(f.q).max(initial=0), np.abs(f.p).max(initial=0))
        return bool(np.abs(np.imag(f.q)).max(initial=0) <= tol * scale
                    and np.abs(np.imag(f.p)).max(initial=0) <= tol * scale)

    def real_part(self) -> "PhaseField":
        f = self.to_real()
        return PhaseField(f.geometry, np.real(f.q), np.real(f.p), "real")

    def __add__(self, other: "PhaseField") -> "PhaseField":
        _check_compatible(self, other)
        return PhaseField(self.geometry, self.q + other.q, self.p + other.p, self.space)

    def __sub__(self, other: "PhaseField") -> "PhaseField":
        _check_compatible(self, other)
        return PhaseField(self.geometry, self.q - other.q, self.p - other.p, self.space)

    def __mul__(self, t) -> "PhaseField":
        return PhaseField(self.geometry, t * self.q, t * self.p, self.space)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(max(np.abs(self.q).max(), np.abs(self.p).max()))


def _check_compatible(a: PhaseField, b: PhaseField):
    if a.geometry != b.geometry:
        raise GeometryError(f"geometry mismatch: {a.geometry} vs {b.geometry}")
    if a.space != b.space:
        raise GeometryError(f"representation mismatch: {a.space} vs {b.space}")


def dft(xi: PhaseField, direction: str = "forward", method: str = "fft") -> PhaseField:
    g = xi.geometry
    if direction == "forward":
        if xi.space != "real":
            raise GeometryError("forward transform needs a real-space field")
        s = g.eps_n ** (g.d / 2)
        return PhaseField(g, s * fourier(xi.q, False, method), s * fourier(xi.p, False, method), "momentum")
    if direction == "inverse":
        if xi.space != "momentum":
            raise GeometryError("inverse transform needs a momentum-space field")
        s = g.eps_n ** (-g.d / 2)
        q = s * fourier(xi.q, True, method)
        p = s * fourier(xi.p, True, method)
        return PhaseField(g, _realify(q), _realify(p), "real")
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def _realify(a: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a.imag).max(initial=0.0) <= 1e-13 * scale:
        return a.real.copy()
    return a


def symplectic_form(xi: PhaseField, eta: PhaseField) -> float:
    """eps_N^d sum_x (q_xi p_eta - p_xi q_eta), evaluated in either representation."""
    if xi.geometry != eta.geometry:
        raise GeometryError(f"geometry mismatch: {xi.geometry} vs {eta.geometry}")
    g = xi.geometry
    if xi.space != eta.space:
        xi, eta = xi.to_momentum(), eta.to_momentum()
    terms = np.conj(xi.q) * eta.p - np.conj(xi.p) * eta.q
    weight = g.eps_n**g.d if xi.space == "real" else float(g.side) ** (-g.d)
    return float(np.real(terms.sum()) * weight)


def periodic_extension(xi: PhaseField, target_level: int) -> PhaseField:
    """Extend momentum data from Gamma_N to Gamma_N' by periodicity 2 pi / eps_N per axis."""
    if xi.space != "momentum":
        raise GeometryError("periodic extension acts on momentum-space fields; call dft first")
    g = xi.geometry
    if target_level < g.level:
        raise GeometryError(f"target level {target_level} is coarser than field level {g.level}")
    reps = 2 ** (target_level - g.level)
    if reps == 1:
        return xi
    tg = g.at_level(target_level)
    return PhaseField(tg, extend_array(xi.q, reps), extend_array(xi.p, reps), "momentum")


def extend_array(a: np.ndarray, reps: int) -> np.ndarray:
    """Periodic extension of a centred array by an integer factor per axis.

    Coarse index l maps to fine index l' with l' = l mod 2 r_N; the centred
    layout makes this a plain tile followed by a shift of (reps - 1) r_N.
    """
    if reps == 1:
        return a
    r = a.shape[0] // 2
    out = np.tile(a, (reps,) * a.ndim)
    return np.roll(out, (reps - 1) * r, axis=tuple(range(a.ndim)))


def translate(xi: PhaseField, a, steps: bool = False) -> PhaseField:
    """(tau_a xi)(x) = xi(x - a) with wrap-around; ``a`` physical unless ``steps``."""
    if xi.space != "real":
        raise GeometryError("translations act on real-space fields")
    g = xi.geometry
    idx = np.asarray(a, dtype=np.int64).reshape(g.d) if steps else g.to_index(a)
    shift = tuple(int(s) % g.side for s in idx)
    axes = tuple(range(g.d))
    return PhaseField(g, np.roll(xi.q, shift, axes), np.roll(xi.p, shift, axes), "real")


def build_geometry(d: int, eps: float, r: int, level: int = 0) -> LatticeGeometry:
    return LatticeGeometry(d, float(eps), int(r) if float(r).is_integer() else r, level)
