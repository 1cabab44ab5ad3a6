"""Joint spectra {(m, lambda_j(m))} of the mass operator and D_Z.

Three backends:

* ``product``: ``lambda = +-sqrt(m^2 + omega^2)`` from a surface Laplace spectrum;
* ``constant-shift``: plane waves on a torus with constant N, beta, h;
* ``pencil``: Fourier-Galerkin discretization of the quadratic pencil
  ``lambda^2 A2 + lambda A1 + A0`` on a torus with periodic coefficients.

Every slice stores both signs of lambda and records the interval of ``|lambda|``
on which it is guaranteed complete.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    CapacityError,
    IncompletenessError,
    InvariantError,
    NonRealSpectrumError,
    SolverError,
    ValidationError,
)
from .geometry import FlatTorus, RoundSphere, StandardStationaryMetric

DEFAULT_MAX_ENTRIES = 20_000_000
CLUSTER_TOL = 1e-7


# --------------------------------------------------------------------------
# surface spectra


@dataclass
class SurfaceSpectrum:
    """Distinct Laplace frequencies ``omega`` (sorted) with multiplicities, complete up to ``cutoff``."""

    omega: np.ndarray
    mult: np.ndarray
    cutoff: float
    surface: dict = field(default_factory=dict)
    omega_sq: np.ndarray | None = None  # kept so that lambda^2 - m^2 = omega^2 stays exact

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.mult = np.asarray(self.mult, dtype=np.int64)
        if self.omega_sq is None:
            self.omega_sq = self.omega**2

    def __len__(self):
        return self.omega.size

    def items(self) -> list[tuple[float, int]]:
        return list(zip(self.omega.tolist(), self.mult.tolist()))

    @property
    def count(self) -> int:
        return int(self.mult.sum())


def _group_sorted(values: np.ndarray, rtol: float, weights=None):
    """Group a sorted array into runs whose consecutive gaps are within ``rtol`` (relative)."""
    if values.size == 0:
        return values.copy(), np.zeros(0, np.int64)
    gaps = np.diff(values)
    scale = np.maximum(1.0, np.abs(values[1:]))
    brk = np.flatnonzero(gaps > rtol * scale) + 1
    starts = np.concatenate([[0], brk])
    w = np.ones(values.size, np.int64) if weights is None else np.asarray(weights, np.int64)
    counts = np.add.reduceat(w, starts)
    sums = np.add.reduceat(values * w, starts)
    return sums / counts, counts


def _lattice_box(kmax: Sequence[int], max_entries: int):
    size = int(np.prod([2 * k + 1 for k in kmax], dtype=float))
    if size > max_entries:
        raise CapacityError(
            f"lattice enumeration needs {size} points, above the budget of {max_entries}; lower the cutoff"
        )
    axes = [np.arange(-k, k + 1) for k in kmax]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(kmax))



def torus_laplace_spectrum(lengths, cutoff: float, max_entries: int = DEFAULT_MAX_ENTRIES) -> SurfaceSpectrum:
    """All ``omega = |2 pi (k_1/L_1, ..., k_d/L_d)| <= cutoff`` grouped by value."""
    L = np.asarray([float(v) for v in lengths])
    if L.size == 0 or np.any(L <= 0):
        raise ValidationError("torus side lengths must be positive")
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    scale = 2 * np.pi / L
    kmax = [int(math.floor(cutoff / s * (1 + 1e-12))) for s in scale]
    K = _lattice_box(kmax, max_entries)
    w2 = ((K * scale) ** 2).sum(axis=1)
    w2 = np.sort(w2[w2 <= cutoff**2 * (1 + 1e-12)])
    vals, counts = _group_sorted(w2, 1e-12)
    return SurfaceSpectrum(np.sqrt(vals), counts, float(cutoff), {"kind": "flat_torus", "lengths": L.tolist()}, vals)


def sphere_harmonic_dim(l: int, d: int) -> int:
    """Dimension of degree-``l`` spherical harmonics on S^d."""
    if l < 0:
        return 0
    out = math.comb(l + d, d)
    if l >= 2:
        out -= math.comb(l + d - 2, d)
    return out


def sphere_laplace_spectrum(d: int, radius: float, cutoff: float, max_entries: int = DEFAULT_MAX_ENTRIES) -> SurfaceSpectrum:
    """``omega_l = sqrt(l(l+d-1))/r`` with harmonic multiplicities, for ``omega_l <= cutoff``."""
    if d < 1 or radius <= 0:
        raise ValidationError("sphere needs d >= 1 and r > 0")
    if cutoff < 0:
        raise ValidationError("cutoff must be nonnegative")
    # l(l+d-1) <= (r cutoff)^2
    c = (radius * cutoff) ** 2
    lmax = int(math.floor((-(d - 1) + math.sqrt((d - 1) ** 2 + 4 * c)) / 2 + 1e-9))
    while lmax * (lmax + d - 1) > c * (1 + 1e-12):
        lmax -= 1
    if lmax + 1 > max_entries:
        raise CapacityError("too many sphere eigenvalues for the budget")
    ls = np.arange(lmax + 1)
    w2 = ls * (ls + d - 1) / radius**2
    mult = np.array([sphere_harmonic_dim(int(l), d) for l in ls], np.int64)
    meta = {"kind": "round_sphere", "dim": d, "radius": radius}
    return SurfaceSpectrum(np.sqrt(w2), mult, float(cutoff), meta, w2.astype(float))


def surface_spectrum(metric: StandardStationaryMetric, cutoff: float, **kw) -> SurfaceSpectrum:
    surf = metric.surface
    if isinstance(surf, RoundSphere):
        return sphere_laplace_spectrum(surf.dim, surf.radius, cutoff, **kw)
    if metric.h is not None:
        raise ValidationError("the product backend supports h = I only; use the constant-shift backend")
    return torus_laplace_spectrum(surf.lengths, cutoff, **kw)


# --------------------------------------------------------------------------
# joint spectra


@dataclass
class SpectrumSlice:
    """Eigenvalues of D_Z at one mass ``m``.

    ``lam`` is sorted ascending and contains both signs; flagged zero modes
    (the lambda = 0 sector at m = 0) are kept out of ``lam`` and counted in
    ``zero_modes``. The slice is complete for ``complete_lo <= |lambda| <= complete_hi``.
    """

    m: float
    lam: np.ndarray
    mult: np.ndarray
    complete_lo: float = 0.0
    complete_hi: float = math.inf
    zero_modes: int = 0
    max_imag: float = 0.0

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.mult = np.asarray(self.mult, dtype=np.int64)
        order = np.argsort(self.lam, kind="stable")
        self.lam = self.lam[order]
        self.mult = self.mult[order]
        self._cum = None

    def values(self, include_zero_modes: bool = False):
        if include_zero_modes and self.zero_modes:
            lam = np.concatenate([self.lam, [0.0]])
            mult = np.concatenate([self.mult, [self.zero_modes]])
            order = np.argsort(lam, kind="stable")
            return lam[order], mult[order]
        return self.lam, self.mult

    def covers(self, lo: float, hi: float) -> bool:
        """Whether every eigenvalue in ``[lo, hi]`` is guaranteed present."""
        if lo > hi:
            return True
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if lo >= 0:
            return lo >= self.complete_lo - tol and hi <= self.complete_hi + tol
        if hi <= 0:
            return -hi >= self.complete_lo - tol and -lo <= self.complete_hi + tol
        return self.complete_lo <= tol and max(-lo, hi) <= self.complete_hi + tol

    def require(self, lo: float, hi: float) -> None:
        if not self.covers(lo, hi):
            raise IncompletenessError(
                f"window [{lo:.17g}, {hi:.17g}] at m={self.m:g} exceeds the completeness guarantee "
                f"{self.complete_lo:.17g} <= |lambda| <= {self.complete_hi:.17g}"
            )

    def count_in(self, lo: float, hi: float, positive_only: bool = True) -> int:
        """Multiplicity-weighted count of ``lam`` in the closed interval ``[lo, hi]``."""
        if self._cum is None:
            self._cum = np.concatenate([[0], np.cumsum(self.mult)])
        lam = self.lam
        if positive_only:
            lo = max(lo, np.nextafter(0.0, 1.0))
        if lo > hi:
            return 0
        i = np.searchsorted(lam, lo, side="left")
        j = np.searchsorted(lam, hi, side="right")
        return int(self._cum[j] - self._cum[i])


@dataclass
class JointSpectrum:
    n: int
    provenance: str
    slices: dict = field(default_factory=dict)
    cutoff: float = math.inf
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.slices = dict(sorted(self.slices.items()))

    @property
    def masses(self) -> list:
        return list(self.slices)

    def slice(self, m) -> SpectrumSlice:
        try:
            return self.slices[m]
        except KeyError:
            raise IncompletenessError(f"no spectrum slice stored for m={m}") from None

    def __contains__(self, m) -> bool:
        return m in self.slices

    def entries(self, include_zero_modes: bool = True) -> Iterator[tuple[float, float, int]]:
        for m, sl in self.slices.items():
            lam, mult = sl.values(include_zero_modes)
            for x, k in zip(lam.tolist(), mult.tolist()):
                yield m, x, k

    def merge(self, other: "JointSpectrum") -> "JointSpectrum":
        if other.n != self.n:
            raise ValidationError("cannot merge spectra of different dimension")
        slices = dict(self.slices)
        slices.update(other.slices)
        return JointSpectrum(self.n, self.provenance, slices, min(self.cutoff, other.cutoff), dict(self.meta))

    def completeness(self) -> dict:
        return {m: (sl.complete_lo, sl.complete_hi) for m, sl in self.slices.items()}


def _symmetric_slice(m, pos, pmult, lo, hi, zero_modes=0, extra_zero=0) -> SpectrumSlice:
    """Slice from positive values ``pos`` mirrored to the negative branch."""
    pos = np.asarray(pos, float)
    pmult = np.asarray(pmult, np.int64)
    lam = np.concatenate([-pos[::-1], pos])
    mult = np.concatenate([pmult[::-1], pmult])
    if extra_zero:
        lam = np.concatenate([lam, [0.0]])
        mult = np.concatenate([mult, [extra_zero]])
    return SpectrumSlice(m, lam, mult, lo, hi, zero_modes)


def product_joint_spectrum(
    surf: SurfaceSpectrum,
    m_values: Iterable,
    n: int | None = None,
    band: tuple[float, float] | None = None,
) -> JointSpectrum:
    """``lambda = +-sqrt(m^2 + omega^2)`` for every stored surface frequency.

    With ``band = (nu, W)`` only ``nu m - W <= |lambda| <= nu m + W`` is kept,
    and the completeness interval shrinks accordingly. A band that reaches
    beyond ``sqrt(m^2 + cutoff^2)`` raises ``IncompletenessError``.
    """
    d = int(surf.surface.get("dim", len(surf.surface.get("lengths", [])))) if surf.surface else None
    n = n if n is not None else (d + 1 if d else 0)
    slices = {}
    w2 = surf.omega_sq
    for m in m_values:
        m = _mass_key(m)
        if m < 0:
            raise ValidationError("mass index must be nonnegative")
        hi = math.sqrt(m * m + surf.cutoff**2)
        lam_all = np.sqrt(m * m + w2)
        lo = 0.0
        sel = slice(None)
        if band is not None:
            nu, W = band
            blo, bhi = max(0.0, nu * m - W), nu * m + W
            if bhi > hi * (1 + 1e-12):
                raise IncompletenessError(
                    f"band up to |lambda|={bhi:.6g} at m={m} exceeds the surface cutoff guarantee {hi:.6g}"
                )
            i = np.searchsorted(lam_all, blo, side="left")
            j = np.searchsorted(lam_all, bhi, side="right")
            sel = slice(i, j)
            lo, hi = blo, bhi
        pos, pm = lam_all[sel], surf.mult[sel]
        zero = 0
        if m == 0 and pos.size and pos[0] == 0.0:
            zero = int(pm[0])
            pos, pm = pos[1:], pm[1:]
        slices[m] = _symmetric_slice(m, pos, pm, lo, hi, zero_modes=zero)
    return JointSpectrum(n, "product", slices, surf.cutoff, {"surface": surf.surface})


def _mass_key(m):
    mf = float(m)
    return int(mf) if mf.is_integer() else mf


def constant_shift_bound(N: float, b: float, m: float, r: float) -> float:
    """Smallest ``|lambda|`` over plane waves with ``|k| >= r``.

    Minimizes ``N sqrt(k^2 + m^2) - b k`` on ``k >= r``; the unconstrained
    minimizer is ``b m / sqrt(N^2 - b^2)``.
    """
    rstar = b * m / math.sqrt(N * N - b * b)
    k = max(r, rstar)
    return N * math.sqrt(k * k + m * m) - b * k


def constant_shift_torus_spectrum(
    N: float,
    beta,
    lengths,
    m,
    cutoff: float,
    h=None,
    band: tuple[float, float] | None = None,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> JointSpectrum:
    """Plane-wave spectrum ``lambda = beta.k +- N sqrt(|k|^2_{h^-1} + m^2)`` on a torus.

    Modes with ``|k|_{h^-1} <= cutoff`` are enumerated; ``m`` may be a scalar or
    an iterable of masses.
    """
    L = np.asarray([float(v) for v in lengths])
    beta = np.asarray(beta, float).reshape(-1)
    d = L.size
    if beta.size != d:
        raise ValidationError("beta needs one entry per torus axis")
    H = np.eye(d) if h is None else np.asarray(h, float)
    Hinv = np.linalg.inv(H)
    bnorm = float(np.sqrt(beta @ H @ beta))
    if N <= 0 or N <= bnorm:
        raise InvariantError(f"need N > |beta|_h for a timelike Killing field (N={N}, |beta|={bnorm})")
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    scale = 2 * np.pi / L
    # |k|_{h^-1} <= cutoff implies |k_i| <= cutoff sqrt(H_ii)
    kmax = [int(math.floor(cutoff * math.sqrt(H[i, i]) / scale[i] * (1 + 1e-12))) for i in range(d)]
    K = _lattice_box(kmax, max_entries) * scale
    k2 = np.einsum("pi,ij,pj->p", K, Hinv, K)
    keep = k2 <= cutoff**2 * (1 + 1e-12)
    K, k2 = K[keep], k2[keep]
    bk = K @ beta
    masses = [m] if np.isscalar(m) else list(m)
    slices = {}
    for mm in masses:
        mm = _mass_key(mm)
        if mm < 0:
            raise ValidationError("mass must be nonnegative")
        root = N * np.sqrt(k2 + mm * mm)
        lam = np.concatenate([bk + root, bk - root])
        hi = constant_shift_bound(N, bnorm, mm, cutoff)
        if max(cutoff, bnorm * mm / math.sqrt(N * N - bnorm * bnorm)) > cutoff:
            hi *= 1 - 1e-12
        lo = 0.0
        if band is not None:
            nu, W = band
            blo, bhi = max(0.0, nu * mm - W), nu * mm + W
            if bhi > hi:
                raise IncompletenessError(f"band up to {bhi:.6g} at m={mm} exceeds the guarantee {hi:.6g}")
            a = np.abs(lam)
            lam = lam[(a >= blo) & (a <= bhi)]
            lo, hi = blo, bhi
        zero = 0
        if mm == 0:
            z = lam == 0.0
            zero = int(z.sum())
            lam = lam[~z]
        lam = np.sort(lam)
        vals, counts = _group_sorted(lam, 1e-12)
        slices[mm] = SpectrumSlice(mm, vals, counts, lo, hi, zero)
    meta = {"N": N, "beta": beta.tolist(), "lengths": L.tolist(), "h": H.tolist()}
    return JointSpectrum(d + 1, "constant-shift", slices, cutoff, meta)


def joint_spectrum(metric: StandardStationaryMetric, m_values, cutoff: float, band=None, **kw) -> JointSpectrum:
    """Dispatch to the closed-form backend matching ``metric``.

    Product metrics use the surface Laplace spectrum, constant-coefficient
    tori the plane-wave formula, anything else the pencil solver.
    """
    if metric.is_product and metric.h is None:
        surf = surface_spectrum(metric, cutoff)
        return product_joint_spectrum(surf, m_values, metric.n, band)
    if metric.is_torus and metric.is_constant:
        beta = [f.constant for f in metric.shift]
        return constant_shift_torus_spectrum(
            metric.lapse.constant, beta, metric.surface.lengths, list(m_values), cutoff, metric.h, band
        )
    if not metric.is_torus:
        raise ValidationError("variable coefficients are supported on tori only")
    out = None
    for m in m_values:
        sl = pencil_joint_spectrum(metric, m, cutoff, **kw)
        out = sl if out is None else out.merge(sl)
    return out


# --------------------------------------------------------------------------
# Fourier-Galerkin pencil


def _basis(lengths, basis_cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    L = np.asarray(lengths, float)
    scale = 2 * np.pi / L
    kmax = [int(math.floor(basis_cutoff / s * (1 + 1e-12))) for s in scale]
    K = _lattice_box(kmax, DEFAULT_MAX_ENTRIES)
    phys = K * scale
    keep = (phys**2).sum(axis=1) <= basis_cutoff**2 * (1 + 1e-12)
    return K[keep], phys[keep]


COEF_RTOL = 1e-14


def _coefficients(values: np.ndarray) -> np.ndarray:
    """Fourier coefficients with FFT rounding noise (below ``COEF_RTOL`` of the largest) set to zero."""
    c = np.fft.fftn(values) / values.size
    top = float(np.abs(c).max()) if c.size else 0.0
    c[np.abs(c) < COEF_RTOL * top] = 0
    return c


def coupling_blocks(*mats) -> list[np.ndarray]:
    """Index sets of the basis modes that the matrices couple (connected components of their pattern)."""
    pattern = np.zeros(mats[0].shape, dtype=bool)
    for A in mats:
        pattern |= A != 0
    n, labels = connected_components(csr_matrix(pattern), directed=False)
    order = np.argsort(labels, kind="stable")
    cuts = np.flatnonzero(np.diff(labels[order])) + 1
    return np.split(order, cuts)


def _gather(coef: np.ndarray, diff: np.ndarray) -> np.ndarray:
    """``coef`` at integer offsets ``diff[..., d]`` (periodic indexing)."""
    idx = tuple(np.mod(diff[..., i], coef.shape[i]) for i in range(coef.ndim))
    return coef[idx]


def pencil_matrices(metric: StandardStationaryMetric, m: float, basis_cutoff: float):
    """Galerkin matrices ``(A2, A1, A0, k_phys)`` of the Klein-Gordon pencil in a Fourier basis."""
    surf = metric.surface
    if not isinstance(surf, FlatTorus):
        raise ValidationError("the pencil backend needs a torus")
    K, phys = _basis(surf.lengths, basis_cutoff)
    d = metric.dim
    kmax = np.abs(K).max(axis=0) if K.size else np.zeros(d, int)
    res = tuple(int(max(4 * k + 2, 8)) for k in kmax)
    pts, _ = surf.nodes(res)
    N = metric.lapse_at(pts)
    beta = metric.shift_at(pts)
    hinv = metric.h_inv
    rho = N * metric.sqrt_det_h
    c2 = _coefficients(rho / N**2)
    c1 = [_coefficients(rho * beta[..., j] / N**2) for j in range(d)]
    G = rho[..., None, None] * (hinv - beta[..., :, None] * beta[..., None, :] / (N**2)[..., None, None])
    diff = K[:, None, :] - K[None, :, :]  # k' - k
    A2 = _gather(c2, diff)
    ksum = phys[:, None, :] + phys[None, :, :]
    A1 = np.zeros_like(A2)
    for j in range(d):
        A1 -= ksum[..., j] * _gather(c1[j], diff)
    A0 = -(m * m) * _gather(_coefficients(rho), diff)
    for i in range(d):
        for j in range(d):
            A0 -= phys[:, None, i] * phys[None, :, j] * _gather(_coefficients(G[..., i, j]), diff)
    # restore exact Hermitian symmetry lost to FFT rounding
    A2 = (A2 + A2.conj().T) / 2
    A1 = (A1 + A1.conj().T) / 2
    A0 = (A0 + A0.conj().T) / 2
    return A2, A1, A0, phys


def solve_pencil(A2, A1, A0) -> np.ndarray:
    """Eigenvalues of ``lambda^2 A2 + lambda A1 + A0`` by companion linearization after Cholesky scaling."""
    try:
        Lc = linalg.cholesky(A2, lower=True)
    except linalg.LinAlgError as exc:
        raise SolverError("leading pencil coefficient is not positive definite") from exc
    P = A2.shape[0]

    def scale(A):
        X = linalg.solve_triangular(Lc, A, lower=True)
        return linalg.solve_triangular(Lc, X.conj().T, lower=True).conj().T

    B1, B0 = scale(A1), scale(A0)
    comp = np.zeros((2 * P, 2 * P), dtype=complex)
    comp[:P, P:] = np.eye(P)
    comp[P:, :P] = -B0
    comp[P:, P:] = -B1
    try:
        ev = linalg.eigvals(comp, overwrite_a=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SolverError("companion eigenvalue solve failed") from exc
    if not np.all(np.isfinite(ev)):
        raise SolverError("companion eigenvalue solve returned non-finite values")
    return ev


def solve_pencil_hermitian(A2, A1, A0) -> np.ndarray | None:
    """Real eigenvalues via the Hermitian-definite linearization, or ``None`` if ``-A0`` is not definite.

    With ``K = -A0`` positive definite and ``v = lambda u`` the pencil becomes
    ``[[0, K], [K, -A1]] z = lambda diag(K, A2) z``, whose spectrum is real.
    """
    K = -A0
    try:
        linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        return None
    P = A2.shape[0]
    left = np.zeros((2 * P, 2 * P), dtype=complex)
    left[:P, P:] = K
    left[P:, :P] = K
    left[P:, P:] = -A1
    right = np.zeros_like(left)
    right[:P, :P] = K
    right[P:, P:] = A2
    try:
        return linalg.eigh(left, right, eigvals_only=True, overwrite_a=True, overwrite_b=True).astype(complex)
    except linalg.LinAlgError as exc:
        raise SolverError("Hermitian pencil solve failed") from exc


PENCIL_METHODS = ("auto", "hermitian", "companion")


def pencil_joint_spectrum(
    metric: StandardStationaryMetric,
    m: float,
    basis_cutoff: float,
    real_tol: float = 1e-8,
    cluster_tol: float = CLUSTER_TOL,
    method: str = "auto",
) -> JointSpectrum:
    """Slice at mass ``m`` from the Galerkin pencil.

    Eigenvalues are retained up to the plane-wave bound at ``basis_cutoff/2``
    evaluated with the smallest lapse and largest shift; the retained set is
    reported complete on that interval.

    ``method="auto"`` uses the Hermitian-definite solve when the constant
    coefficient is definite (``m > 0`` and a valid metric) and the companion
    linearization otherwise. ``"companion"`` always takes the general
    eigenvalue route, which measures imaginary parts instead of excluding them
    by construction.
    """
    if real_tol <= 0 or cluster_tol <= 0:
        raise ValidationError("tolerances must be positive")
    if m < 0:
        raise ValidationError("mass must be nonnegative")
    if method not in PENCIL_METHODS:
        raise ValidationError(f"unknown pencil method {method!r}; choose from {PENCIL_METHODS}")
    metric.validate()
    A2, A1, A0, phys = pencil_matrices(metric, m, basis_cutoff)
    blocks = coupling_blocks(A2, A1, A0)
    parts = []
    used = set()
    for idx in blocks:
        sub = np.ix_(idx, idx)
        ev = None
        if method != "companion":
            ev = solve_pencil_hermitian(A2[sub], A1[sub], A0[sub])
            if ev is None and method == "hermitian":
                raise SolverError("constant pencil coefficient is not negative definite")
        if ev is None:
            ev = solve_pencil(A2[sub], A1[sub], A0[sub])
            used.add("companion")
        else:
            used.add("hermitian")
        parts.append(ev)
    ev = np.concatenate(parts) if parts else np.zeros(0, complex)
    used = "+".join(sorted(used))
    imag = np.abs(ev.imag)
    max_imag = float(imag.max()) if ev.size else 0.0
    if max_imag >= real_tol:
        worst = ev[np.argmax(imag)]
        raise NonRealSpectrumError(
            f"eigenvalue {worst:.6g} has imaginary part {abs(worst.imag):.3g} >= real_tol={real_tol:g}"
        )
    pts, _ = metric.nodes()
    Nmin = float(metric.lapse_at(pts).min())
    bmax = float(np.sqrt(metric.beta_norm_sq(pts).max()))
    if Nmin <= bmax:
        raise InvariantError("lapse does not dominate the shift")
    hi = constant_shift_bound(Nmin, bmax, float(m), basis_cutoff / 2)
    lam = np.sort(ev.real)
    # eigenvalues on the bound itself are kept; rounding would otherwise split degenerate groups
    lam = lam[np.abs(lam) <= hi * (1 + 1e-9)]
    zero = 0
    zero_algebraic = 0
    if m == 0:
        z = np.abs(lam) <= cluster_tol
        zero_algebraic = int(z.sum())
        lam = lam[~z]
        # lambda = 0 sits in a Jordan block; report the eigenvector count dim ker A0
        a0 = linalg.eigvalsh(A0)
        zero = int(np.sum(np.abs(a0) <= cluster_tol * max(1.0, float(np.abs(a0).max()))))
    vals, counts = _group_sorted(lam, cluster_tol)
    mk = _mass_key(m)
    sl = SpectrumSlice(mk, vals, counts, 0.0, hi, zero, max_imag)
    meta = {"basis_cutoff": basis_cutoff, "basis_size": int(phys.shape[0]), "max_imag": max_imag, "method": used, "zero_algebraic": zero_algebraic,
            "blocks": len(blocks), "largest_block": max((b.size for b in blocks), default=0)}
    return JointSpectrum(metric.n, "pencil", {mk: sl}, basis_cutoff / 2, meta)


# --------------------------------------------------------------------------
# misc


def energy_form_product(lam: float, l2_norm_sq: float) -> float:
    """Energy ``lambda^2 ||u||^2`` of a product-case eigenmode."""
    if l2_norm_sq < 0:
        raise ValidationError("squared norm must be nonnegative")
    return float(lam) ** 2 * float(l2_norm_sq)


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def slice_to_csv(sl: SpectrumSlice, include_zero_modes: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "lambda", "multiplicity"])
    lam, mult = sl.values(include_zero_modes)
    mstr = str(sl.m) if isinstance(sl.m, int) else format_float(sl.m)
    for x, k in zip(lam.tolist(), mult.tolist()):
        w.writerow([mstr, format_float(x), k])
    return buf.getvalue()


def slice_from_csv(
    text: str, complete_lo: float, complete_hi: float, zero_flag: bool = True, m=None, max_imag: float = 0.0
) -> SpectrumSlice:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["m", "lambda", "multiplicity"]:
        raise ValidationError("unexpected spectrum CSV header")
    body = rows[1:]
    if m is None:
        if not body:
            raise ValidationError("empty spectrum CSV: mass unknown")
        m = body[0][0]
    m = _mass_key(float(m))
    if any(_mass_key(float(r[0])) != m for r in body):
        raise ValidationError("spectrum CSV mixes masses")
    lam = np.array([float(r[1]) for r in body])
    mult = np.array([int(r[2]) for r in body], np.int64)
    zero = 0
    if zero_flag and m == 0:
        z = lam == 0.0
        zero = int(mult[z].sum())
        lam, mult = lam[~z], mult[~z]
    return SpectrumSlice(m, lam, mult, complete_lo, complete_hi, zero, max_imag)


__all__ = [
    "SurfaceSpectrum",
    "SpectrumSlice",
    "JointSpectrum",
    "torus_laplace_spectrum",
    "sphere_laplace_spectrum",
    "surface_spectrum",
    "product_joint_spectrum",
    "constant_shift_torus_spectrum",
    "constant_shift_bound",
    "pencil_matrices",
    "solve_pencil",
    "pencil_joint_spectrum",
    "joint_spectrum",
    "energy_form_product",
    "slice_to_csv",
    "slice_from_csv",
    "sphere_harmonic_dim",
]
