"""Scaling maps between dyadic lattices and the embedding into the continuum.

A step N -> N+1 of a finite filter scheme places coarse values on the even
fine sites and convolves each axis with 2^(1/2) h.  In momentum space this is
multiplication of the periodic extension by 2^(d/2) m0(eps_{N+1} k).
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np

from .continuum import ContinuumField, TailModel
from .filters import (FilterBank, FilterError, decay_envelope, high_pass, m0_axis,
                      make_filter, phi_hat)
from .lattice import GeometryError, LatticeGeometry, PhaseField, periodic_extension, translate

ALIASES = {"wavelet": "daubechies", "momentum_cutoff": "momentum_shell", "block_spin": "blockspin"}
MOMENTUM_SCHEMES = ("momentum_shell", "momentum_transfer")
TAIL_TARGET = 1e-8


def canonical_scheme(scheme: str) -> str:
    return ALIASES.get(scheme, scheme)


@dataclass(frozen=True)
class ScalingMap:
    """R^N_{N'} for one scheme on a fixed torus."""

    scheme: str
    geometry: LatticeGeometry
    source_level: int
    target_level: int
    K: int | None = None
    _filters: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "scheme", canonical_scheme(self.scheme))
        if self.target_level < self.source_level:
            raise GeometryError(f"target level {self.target_level} below source level {self.source_level}")
        if self.scheme == "daubechies" and self.K is None:
            object.__setattr__(self, "K", 2)
        if self.scheme != "momentum_transfer":
            self.filter_at(self.source_level)  # validates scheme and K early

    @property
    def steps(self) -> int:
        return self.target_level - self.source_level

    @property
    def d(self) -> int:
        return self.geometry.d

    @property
    def finite(self) -> bool:
        return self.scheme not in MOMENTUM_SCHEMES

    def filter_at(self, level: int) -> FilterBank:
        """Filter used for the step level -> level + 1."""
        if self.scheme == "momentum_transfer":
            raise FilterError("momentum_transfer has no real-space taps; it is defined in momentum space")
        key = level if self.scheme == "momentum_shell" else None
        if key not in self._filters:
            r_fine = self.geometry.at_level(level + 1).r_n if self.scheme == "momentum_shell" else None
            self._filters[key] = make_filter(self.scheme, self.K, self.d, r_fine)
        return self._filters[key]

    @property
    def filter(self) -> FilterBank:
        return self.filter_at(self.source_level)

    def source(self) -> LatticeGeometry:
        return self.geometry.at_level(self.source_level)

    def target(self) -> LatticeGeometry:
        return self.geometry.at_level(self.target_level)

    def single_steps(self) -> list["ScalingMap"]:
        return [ScalingMap(self.scheme, self.geometry, n, n + 1, self.K, self._filters)
                for n in range(self.source_level, self.target_level)]


def scaling_map(scheme: str, geometry: LatticeGeometry, target_level: int, K: int | None = None,
                source_level: int | None = None) -> ScalingMap:
    src = geometry.level if source_level is None else source_level
    return ScalingMap(scheme, geometry.at_level(0), src, target_level, K)


def _check_source(rmap: ScalingMap, xi: PhaseField, one_step: bool = True):
    if one_step and rmap.steps != 1:
        raise GeometryError(f"single-step map expected, got {rmap.source_level} -> {rmap.target_level}")
    if not xi.geometry.same_torus(rmap.geometry) or xi.level != rmap.source_level:
        raise GeometryError(f"field at level {xi.level} on {xi.geometry} does not match map source "
                            f"level {rmap.source_level}")


def upsample(a: np.ndarray) -> np.ndarray:
    """Coarse values onto the even fine sites (coarse index i -> fine index 2i), zeros elsewhere."""
    out = np.zeros(tuple(2 * s for s in a.shape), dtype=a.dtype)
    out[(slice(None, None, 2),) * a.ndim] = a
    return out


def _convolve_axes(a: np.ndarray, taps: dict) -> np.ndarray:
    dtype = np.result_type(a, *[np.asarray(v) for v in taps.values()])
    for ax in range(a.ndim):
        out = np.zeros(a.shape, dtype)
        for n, h in taps.items():
            out = out + math.sqrt(2.0) * h * np.roll(a, n, axis=ax)
        a = out
    return a


def step_real(rmap: ScalingMap, xi: PhaseField) -> PhaseField:
    _check_source(rmap, xi)
    if xi.space != "real":
        raise GeometryError("step_real needs a real-space field")
    if not rmap.finite:
        return step_momentum(rmap, xi.to_momentum()).to_real()
    taps = rmap.filter_at(xi.level).taps
    tg = rmap.target()
    return PhaseField(tg, _convolve_axes(upsample(xi.q), taps), _convolve_axes(upsample(xi.p), taps), "real")


def _axis_multiplier(rmap: ScalingMap, level: int) -> np.ndarray:
    """One-axis factor 2^(1/2) m0(eps_{level+1} k) on Gamma_{level+1}."""
    fine = rmap.geometry.at_level(level + 1)
    f = rmap.filter_at(level)
    base = FilterBank(f.scheme, f.offsets, f.values, 1, f.K, f.r_fine)
    return math.sqrt(2.0) * m0_axis(base, fine.eps_n * fine.axis_momenta())


def _outer(factors: list[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def step_momentum(rmap: ScalingMap, xi: PhaseField) -> PhaseField:
    _check_source(rmap, xi)
    if xi.space != "momentum":
        raise GeometryError("step_momentum needs a momentum-space field")
    g, tg = xi.geometry, rmap.target()
    d, r = g.d, g.r_n
    if rmap.scheme == "momentum_shell":
        sl = (slice(r, 3 * r),) * d
        q = np.zeros(tg.shape, complex)
        p = np.zeros(tg.shape, complex)
        q[sl] = 2 ** (d / 2) * xi.q
        p[sl] = 2 ** (d / 2) * xi.p
        return PhaseField(tg, q, p, "momentum")
    if rmap.scheme == "momentum_transfer":
        # coarse momentum index a sits at fine index 2a; in the centred layout that is 2i
        sl = (slice(0, None, 2),) * d
        q = np.zeros(tg.shape, complex)
        p = np.zeros(tg.shape, complex)
        q[sl] = 2 ** ((d + 1) / 2) * xi.q
        p[sl] = 2 ** ((d - 1) / 2) * xi.p
        return PhaseField(tg, q, p, "momentum")
    ext = periodic_extension(xi, xi.level + 1)
    mult = _outer([_axis_multiplier(rmap, xi.level)] * d)
    return PhaseField(tg, mult * ext.q, mult * ext.p, "momentum")


def compose(*maps: ScalingMap) -> ScalingMap:
    """Compose maps given in application order (first applied first)."""
    if not maps:
        raise ValueError("compose needs at least one map")
    first = maps[0]
    for a, b in zip(maps, maps[1:]):
        if b.scheme != first.scheme or b.K != first.K or b.geometry != first.geometry:
            raise GeometryError("only maps of one scheme on one torus compose")
        if b.source_level != a.target_level:
            raise GeometryError(f"level gap: {a.target_level} -> {b.source_level}")
    return ScalingMap(first.scheme, first.geometry, first.source_level, maps[-1].target_level, first.K)


def identity_map(scheme: str, geometry: LatticeGeometry, K: int | None = None) -> ScalingMap:
    return ScalingMap(scheme, geometry.at_level(0), geometry.level, geometry.level, K)


def composite_multiplier(rmap: ScalingMap) -> np.ndarray:
    """2^(dM/2) prod_{n=1..M} m0(eps_{N+n} k) on Gamma_{N+M}, finite schemes only."""
    if not rmap.finite:
        raise FilterError(f"{rmap.scheme} has no multiplier form")
    tg = rmap.target()
    axis = np.ones(tg.side, complex)
    for level in range(rmap.source_level, rmap.target_level):
        reps = 2 ** (rmap.target_level - level - 1)
        axis = axis * _extend_1d(_axis_multiplier(rmap, level), reps)
    return _outer([axis] * rmap.d)


def _extend_1d(a: np.ndarray, reps: int) -> np.ndarray:
    if reps == 1:
        return a
    r = a.size // 2
    return np.roll(np.tile(a, reps), (reps - 1) * r)


def apply(rmap: ScalingMap, xi: PhaseField, method: str = "sequential") -> PhaseField:
    """Apply R^N_{N'}; the result keeps the representation of the input.

    ``method="multiplier"`` uses the composite momentum-space multiplier for
    finite schemes instead of stepping.
    """
    _check_source(rmap, xi, one_step=False)
    if rmap.steps == 0:
        return xi
    if method == "multiplier":
        mom = xi.to_momentum()
        ext = periodic_extension(mom, rmap.target_level)
        mult = composite_multiplier(rmap)
        out = PhaseField(ext.geometry, mult * ext.q, mult * ext.p, "momentum")
        return out if xi.space == "momentum" else out.to_real()
    if method != "sequential":
        raise ValueError(f"unknown method {method!r}")
    step = step_real if xi.space == "real" else step_momentum
    for s in rmap.single_steps():
        xi = step(s, xi)
    return xi


# --- continuum embedding -----------------------------------------------------

def _cutoff_cap(d: int) -> int:
    return {1: 2**18, 2: 2**9}.get(d, 2**5)


@lru_cache(maxsize=64)
def scaling_axis(scheme: str, K: int | None, step: float, kc: int) -> np.ndarray:
    """phi_hat(step * n) for n = -kc..kc, cached since flows reuse the same grid."""
    n = np.arange(-kc, kc + 1)
    if scheme == "point":
        out = np.ones(n.shape, complex)
    else:
        out = phi_hat(make_filter(scheme, K, 1), step * n)
    out.setflags(write=False)
    return out


def select_cutoff(model: TailModel | None, m: float, g: LatticeGeometry, k_cutoff: int | None,
                  tol: float = TAIL_TARGET) -> tuple[int, bool]:
    """Explicit cutoff, or the first doubling of the Nyquist index with tail below ``tol``."""
    if k_cutoff is not None:
        if k_cutoff < g.r_n:
            raise GeometryError(f"k_cutoff {k_cutoff} is below the Nyquist index {g.r_n} of level {g.level}")
        return int(k_cutoff), model is None or model.tail(m, int(k_cutoff), g.L) < tol
    if model is None:
        return g.r_n, True
    kc, cap = g.r_n, _cutoff_cap(g.d)
    while model.tail(m, kc, g.L) >= tol and kc < cap:
        kc *= 2
    return kc, model.tail(m, kc, g.L) < tol


def embed_continuum(xi: PhaseField, k_cutoff: int | None = None, scheme: str = "daubechies",
                    K: int | None = 2, m: float = 1.0, tol: float = TAIL_TARGET) -> ContinuumField:
    """R^N_inf xi = eps_N^(d/2) phi_hat(eps_N k) times the periodic extension, for |n_j| <= k_cutoff.

    ``k_cutoff`` is an index on (pi/L)Z^d.  Without one, it starts at the
    field's Nyquist index and doubles until the tail bound (evaluated at mass
    ``m``) drops below ``tol`` or a size cap is hit; ``trusted`` records which.
    """
    scheme = canonical_scheme(scheme)
    mom = xi.to_momentum()
    g = mom.geometry
    d, eps = g.d, g.eps_n
    if scheme == "momentum_transfer":
        raise FilterError("momentum_transfer has no continuum embedding")
    if scheme == "momentum_shell":
        kc = g.r_n if k_cutoff is None else int(k_cutoff)
        return _embed_sharp(mom, kc)
    f = make_filter(scheme, K, 1)
    decay = decay_envelope(f) if scheme != "point" else None
    model = None
    if decay is not None:
        model = TailModel(decay, eps, g.dk, d, float(np.abs(mom.q).max()), float(np.abs(mom.p).max()))
    kc, trusted = select_cutoff(model, m, g, k_cutoff, tol)
    n = np.arange(-kc, kc + 1)
    weight = eps ** (d / 2) * _outer([scaling_axis(scheme, K, eps * g.dk, kc)] * d)
    idx = (n + g.r_n) % g.side
    grid = np.ix_(*([idx] * d))
    cf = ContinuumField(g.L, d, kc, weight * mom.q[grid], weight * mom.p[grid],
                        model, trusted and scheme != "point")
    if scheme == "point":
        cf.meta["warning"] = "point scheme: no decay, the truncation tail is unbounded"
    if scheme in ("blockspin", "haar"):
        cf.meta["warning"] = "box-function decay is too slow for finite momentum-space norms of p"
    return cf


def _embed_sharp(mom: PhaseField, kc: int) -> ContinuumField:
    g = mom.geometry
    if kc < g.r_n:
        raise GeometryError(f"k_cutoff {kc} must cover Gamma_N (index {g.r_n})")
    q = np.zeros((2 * kc + 1,) * g.d, complex)
    p = np.zeros_like(q)
    sl = (slice(kc - g.r_n, kc + g.r_n),) * g.d
    w = g.eps_n ** (g.d / 2)
    q[sl] = w * mom.q
    p[sl] = w * mom.p
    return ContinuumField(g.L, g.d, kc, q, p, None, True)


# --- MERA form of one step ---------------------------------------------------

@dataclass
class MeraDecomposition:
    """One step as 2^(d/2) S applied after the zero-padding inclusion.

    ``kernel`` is the orthogonal completion: even columns carry the low-pass
    taps, odd columns the high-pass taps.  ``lowpass_kernel`` is the plain
    circulant with h on every shift.
    """

    kernel: np.ndarray
    lowpass_kernel: np.ndarray
    source: LatticeGeometry
    target: LatticeGeometry

    def include(self, xi: PhaseField) -> PhaseField:
        if xi.space != "real":
            raise GeometryError("the inclusion acts on real-space fields")
        return PhaseField(self.target, upsample(xi.q), upsample(xi.p), "real")

    def apply_kernel(self, xi: PhaseField, matrix: np.ndarray | None = None) -> PhaseField:
        S = self.kernel if matrix is None else matrix
        shape = xi.geometry.shape
        return PhaseField(xi.geometry, (S @ xi.q.ravel()).reshape(shape), (S @ xi.p.ravel()).reshape(shape), "real")

    def step(self, xi: PhaseField) -> PhaseField:
        return 2 ** (self.source.d / 2) * self.apply_kernel(self.include(xi))

    def orthogonality_defect(self) -> float:
        S = self.kernel
        return float(np.abs(S.T @ S - np.eye(S.shape[0])).max())


def _kernel_1d(taps: dict, side: int, odd_taps: dict | None) -> np.ndarray:
    S = np.zeros((side, side))
    for c in range(side):
        use = taps if (c % 2 == 0 or odd_taps is None) else odd_taps
        col = c if use is taps else c - 1
        for n, h in use.items():
            S[(col + n) % side, c] += h
    return S


def mera_decompose(rmap: ScalingMap) -> MeraDecomposition:
    if rmap.steps != 1:
        raise GeometryError("mera_decompose takes a single step N -> N+1")
    if not rmap.finite or rmap.scheme == "point":
        raise FilterError(f"{rmap.scheme} has no finite orthogonal kernel")
    f = rmap.filter
    base = FilterBank(f.scheme, f.offsets, f.values, 1, f.K)
    shift = (len(f.offsets) // 2) - 1  # keeps the high-pass taps on the low-pass support
    g = high_pass(base, shift).taps
    side = rmap.target().side
    S1 = _kernel_1d(f.taps, side, g)
    C1 = _kernel_1d(f.taps, side, None)
    S, C = S1, C1
    for _ in range(rmap.d - 1):
        S, C = np.kron(S, S1), np.kron(C, C1)
    return MeraDecomposition(S, C, rmap.source(), rmap.target())


# --- supports -----------------------------------------------------------------

def _runs(values: set[int]) -> list[tuple[int, int]]:
    out = []
    for v in sorted(values):
        if out and v == out[-1][1] + 1:
            out[-1] = (out[-1][0], v)
        else:
            out.append((v, v))
    return out


@dataclass(frozen=True)
class SupportRegion:
    """Union of boxes of integer site coordinates at one level.

    Boxes are stored unwrapped (coordinates may leave -r_N..r_N-1); membership
    reduces mod 2 r_N.
    """

    geometry: LatticeGeometry
    boxes: tuple[tuple[tuple[int, int], ...], ...]

    @classmethod
    def box(cls, geometry: LatticeGeometry, *intervals) -> "SupportRegion":
        if len(intervals) != geometry.d:
            raise GeometryError(f"need {geometry.d} intervals")
        return cls(geometry, (tuple((int(a), int(b)) for a, b in intervals),))

    def contains(self, site) -> bool:
        site = np.asarray(site, dtype=np.int64)
        side = self.geometry.side
        for b in self.boxes:
            if all(((s - lo) % side) <= hi - lo for s, (lo, hi) in zip(site, b)):
                return True
        return False

    def mask(self) -> np.ndarray:
        g = self.geometry
        out = np.zeros(g.shape, bool)
        for b in self.boxes:
            idx = [np.arange(lo, hi + 1) % g.side for lo, hi in b]
            idx = [(i + g.r_n) % g.side for i in idx]
            out[np.ix_(*idx)] = True
        return out

    def extent(self, axis: int) -> tuple[int, int]:
        return min(b[axis][0] for b in self.boxes), max(b[axis][1] for b in self.boxes)


@dataclass
class SupportGrowth:
    region: SupportRegion
    growth_lower: list[float]
    growth_upper: list[float]
    bound: float

    @property
    def within_bound(self) -> bool:
        return max(self.growth_lower + self.growth_upper) <= self.bound * (1 + 1e-12)


def support_growth(region: SupportRegion, rmap: ScalingMap) -> SupportGrowth:
    """Exact image support and its growth against r_max eps_N (1 - 2^-(N'-N))."""
    if not rmap.finite:
        raise FilterError(f"{rmap.scheme} maps are non-local; supports are global")
    if region.geometry.level != rmap.source_level:
        raise GeometryError("region level does not match map source")
    offsets = rmap.filter.offsets
    boxes = region.boxes
    for _ in range(rmap.steps):
        new = []
        for b in boxes:
            axes = [_runs({2 * j + n for j in range(lo, hi + 1) for n in offsets}) for lo, hi in b]
            new.extend(_product(axes))
        boxes = tuple(new)
    out = SupportRegion(rmap.target(), boxes)
    eps_src, eps_tgt = rmap.source().eps_n, rmap.target().eps_n
    lower, upper = [], []
    for ax in range(rmap.d):
        lo0, hi0 = region.extent(ax)
        lo1, hi1 = out.extent(ax)
        lower.append(max(0.0, lo0 * eps_src - lo1 * eps_tgt))
        upper.append(max(0.0, hi1 * eps_tgt - hi0 * eps_src))
    bound = rmap.filter.r_max * eps_src * (1 - 2.0 ** (-rmap.steps))
    return SupportGrowth(out, lower, upper, bound)


def _product(axes: list[list[tuple[int, int]]]) -> list[tuple[tuple[int, int], ...]]:
    out = [()]
    for runs in axes:
        out = [b + (r,) for b in out for r in runs]
    return out


def translation_covariance_check(rmap: ScalingMap, a, xi: PhaseField, steps: bool = False) -> float:
    """sup-norm of R(tau_a xi) - tau_a R(xi); ``a`` is a physical vector unless ``steps``."""
    xi = xi.to_real()
    if steps:
        a = np.asarray(a, dtype=float).reshape(xi.geometry.d) * xi.geometry.eps_n
    left = apply(rmap, translate(xi, a)).to_real()
    right = translate(apply(rmap, xi).to_real(), a)
    return (left - right).max_abs()
