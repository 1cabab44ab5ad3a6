"""Liouville volume of the ladder level set and the Weyl-law predictions built on it.

Three routes to ``mu = mu(N_1(nu))``:

* closed form for product metrics ``-dt^2 + h``;
* quadrature of ``alpha * nu N B^{-n/2} (nu^2 - B)_+^{(n-3)/2}`` over (Sigma, dVol_h),
  with ``B = N^2 - |beta|_h^2`` and ``alpha`` the area of the unit sphere in R^(n-1);
* Monte Carlo over Sigma of the T-derivative of the momentum-ellipsoid volume
  ``{xi : tau(x, xi) <= T}`` at ``T = nu``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyLadderError, ValidationError
from .geometry import (
    FlatTorus,
    RoundSphere,
    StandardStationaryMetric,
    ball_volume,
    find_critical_points,
    integrate_allowed,
    sphere_area,
)

SPHERE_CONVENTION = "alpha = area of the unit sphere in R^(n-1), i.e. of S^(n-2)"


def sphere_constant(n: int) -> float:
    """Area of the unit sphere in R^(n-1); equals 2 for n = 2 (two points)."""
    if n < 2:
        raise ValidationError("n must be at least 2")
    return sphere_area(n - 2)


@dataclass
class VolumeResult:
    value: float
    method: str
    error: float
    nodes: int
    convention: str = SPHERE_CONVENTION

    def to_dict(self) -> dict:
        return asdict(self)


def volume_closed_form_product(vol_sigma: float, nu: float, n: int) -> float:
    """``alpha (nu^2 - 1)^{(n-2)/2} nu / sqrt(nu^2 - 1) Vol(Sigma)`` for ``-dt^2 + h``."""
    if n < 2:
        raise ValidationError("n must be at least 2")
    if vol_sigma < 0:
        raise ValidationError("volume must be nonnegative")
    if nu <= 1:
        raise EmptyLadderError(f"nu={nu} <= 1: the product ladder is empty or critical")
    r = math.sqrt(nu * nu - 1)
    return sphere_constant(n) * r ** (n - 2) * nu / r * vol_sigma


def _check_n(metric: StandardStationaryMetric, n: int | None) -> int:
    if n is None:
        return metric.n
    if n != metric.n:
        raise ValidationError(f"n={n} does not match the metric dimension {metric.n}")
    return n


def _density_integrand(metric: StandardStationaryMetric, nu: float, n: int):
    alpha = sphere_constant(n)
    p = (n - 3) / 2

    def f(x, slack):
        N = metric.lapse_at(x)
        B = metric.bottom_sq(x)
        out = alpha * nu * N * B ** (-n / 2)
        if p != 0:
            out = out * slack**p
        return out

    return f


def volume_quadrature(metric: StandardStationaryMetric, nu: float, n: int | None = None, nodes: int = 64) -> VolumeResult:
    """Horizon-adapted quadrature with error from node doubling.

    For ``n = 2`` the integrand has an inverse square-root singularity at the
    horizon; the endpoint-clustered Gauss rule absorbs it, and a warning is
    emitted whenever a horizon is present.
    """
    n = _check_n(metric, n)
    if nu <= 0:
        raise ValidationError("nu must be positive")
    if nodes < 4:
        raise ValidationError("need at least 4 nodes per axis")
    f = _density_integrand(metric, nu, n)
    if isinstance(metric.surface, RoundSphere):
        lo_res = metric.surface.default_resolution()
        pts, w = metric.surface.nodes(lo_res)
        slack = nu * nu - metric.bottom_sq(pts)
        keep = slack > 0
        val = float(np.sum(w[keep] * f(pts[keep], slack[keep]))) if keep.any() else 0.0
        return VolumeResult(val, "quadrature", 0.0, int(w.size))
    if n == 2:
        lo, hi = metric.field_extent()
        if lo < nu * nu < hi:
            warnings.warn(
                "n = 2: the density has an inverse square-root singularity at the horizon; "
                "using endpoint-clustered quadrature",
                RuntimeWarning,
                stacklevel=2,
            )
    coarse = integrate_allowed(metric, nu, f, q=nodes, p=max(16, nodes // 2))
    fine = integrate_allowed(metric, nu, f, q=2 * nodes, p=max(32, nodes))
    count = (2 * nodes) ** (metric.dim)
    return VolumeResult(fine, "quadrature", abs(fine - coarse), count)


# --------------------------------------------------------------------------
# momentum ellipsoids


def _ellipsoid_parts(metric: StandardStationaryMetric, x):
    """Per-point ``(A, det A, 1 + beta^T A^-1 beta, N)`` with ``A = N^2 h^-1 - beta beta^T``."""
    N = metric.lapse_at(x)
    beta = metric.shift_at(x)
    hinv = metric.h_inv
    A = (N**2)[..., None, None] * hinv - beta[..., :, None] * beta[..., None, :]
    detA = np.linalg.det(A)
    Ab = np.linalg.solve(A, beta[..., None])[..., 0]
    kappa = 1.0 + np.einsum("...i,...i->...", beta, Ab)
    return detA, kappa, N


def ellipsoid_volume(metric: StandardStationaryMetric, x, T, m: float = 1.0):
    """Volume of ``{xi : beta.xi + N sqrt(|xi|^2_{h^-1} + m^2) <= T}`` in coordinate momentum space."""
    d = metric.dim
    detA, kappa, N = _ellipsoid_parts(metric, x)
    R = np.asarray(T, float) ** 2 * kappa - N**2 * m * m
    return ball_volume(d) * np.maximum(R, 0.0) ** (d / 2) / np.sqrt(detA)


def ellipsoid_volume_rate(metric: StandardStationaryMetric, x, T, m: float = 1.0):
    """Analytic ``d/dT`` of :func:`ellipsoid_volume` (zero outside the allowed region)."""
    d = metric.dim
    detA, kappa, N = _ellipsoid_parts(metric, x)
    T = np.asarray(T, float)
    R = T**2 * kappa - N**2 * m * m
    out = np.zeros(np.broadcast(R, T).shape)
    pos = R > 0
    Rp = np.where(pos, R, 1.0)
    val = ball_volume(d) * (d / 2) * Rp ** (d / 2 - 1) * 2 * T * kappa / np.sqrt(detA)
    out[pos] = np.broadcast_to(val, out.shape)[pos]
    return out


def volume_ellipsoid(metric: StandardStationaryMetric, nu: float, m: float = 1.0, nodes: int = 64) -> VolumeResult:
    """``mu(N_m(nu)) = d/dT int_Sigma V_m(x, T) dx`` at ``T = nu m``, by horizon-adapted quadrature.

    The allowed region at mass ``m`` and ``T = nu m`` is the same set as for
    mass 1 at ``T = nu``, so the same nodes serve every ``m``.
    """
    if m <= 0 or nu <= 0:
        raise ValidationError("need m > 0 and nu > 0")
    sdh = metric.sqrt_det_h if metric.is_torus else 1.0

    def f(x, slack):
        return ellipsoid_volume_rate(metric, x, nu * m, m) / sdh

    if isinstance(metric.surface, RoundSphere):
        pts, w = metric.surface.nodes()
        val = float(np.sum(w * f(pts, None)))
        return VolumeResult(val, "ellipsoid", 0.0, int(w.size))
    coarse = integrate_allowed(metric, nu, f, q=nodes, p=max(16, nodes // 2))
    fine = integrate_allowed(metric, nu, f, q=2 * nodes, p=max(32, nodes))
    return VolumeResult(fine, "ellipsoid", abs(fine - coarse), (2 * nodes) ** metric.dim)


# --------------------------------------------------------------------------
# Monte Carlo


def _cells_per_axis(samples: int, d: int) -> int:
    # about 16 samples per cell, at most 256 cells along an axis
    return int(max(1, min(256, math.floor((samples / 16) ** (1.0 / d)))))


def volume_montecarlo(
    metric: StandardStationaryMetric,
    nu: float,
    n: int | None = None,
    samples: int = 10**6,
    seed: int = 0,
    dq: float | None = None,
) -> VolumeResult:
    """Stratified Monte Carlo of ``int_Sigma dV/dT`` with ``dV/dT`` from central differences.

    Sigma is split into equal cells with the same number of uniform samples
    each; every row of cells along the first axis draws from its own stream
    spawned from ``SeedSequence(seed)``, so the estimate is reproducible bit
    for bit. The reported error combines the stratified standard error, a
    Richardson estimate of the finite-difference error (``dq`` vs ``2 dq``)
    and the rounding floor of the difference quotient.
    """
    n = _check_n(metric, n)
    if nu <= 0:
        raise ValidationError("nu must be positive")
    if samples < 10**4:
        raise ValidationError("Monte Carlo needs at least 1e4 samples")
    dq = 1e-4 * nu if dq is None else float(dq)
    if dq <= 0:
        raise ValidationError("dq must be positive")
    _, crit = find_critical_points(metric)
    if any(abs(nu - c) <= dq for c in crit):
        warnings.warn(f"nu={nu} lies within dq={dq:g} of a critical level; the derivative is ill-conditioned",
                      RuntimeWarning, stacklevel=2)
    d = metric.dim
    ss = np.random.SeedSequence(seed)

    bv = ball_volume(d)

    def fd_all(x):
        # V(nu), and central differences with steps dq and 2 dq, sharing the ellipsoid shape
        detA, kappa, N = _ellipsoid_parts(metric, x)
        pref = bv / np.sqrt(detA)
        N2 = N**2

        def V(T):
            return pref * np.maximum(T * T * kappa - N2, 0.0) ** (d / 2)

        f1 = (V(nu + dq) - V(nu - dq)) / (2 * dq)
        f2 = (V(nu + 2 * dq) - V(nu - 2 * dq)) / (4 * dq)
        return f1, f2, np.abs(V(nu))

    if isinstance(metric.surface, RoundSphere):
        rng = np.random.default_rng(ss)
        g = rng.standard_normal((samples, d + 1))
        x = metric.surface.radius * g / np.linalg.norm(g, axis=1, keepdims=True)
        vol = metric.surface.coordinate_volume
        f1, f2, v0 = fd_all(x)
        est = vol * f1.mean()
        se = vol * f1.std(ddof=1) / math.sqrt(samples)
        fd_err = vol * abs(f1.mean() - f2.mean()) / 3
        rnd = vol * 4 * np.finfo(float).eps * v0.mean() / dq
        return VolumeResult(float(est), "monte-carlo", float(math.sqrt(se**2 + fd_err**2) + rnd), samples)

    surf: FlatTorus = metric.surface
    L = np.asarray(surf.lengths)
    c = _cells_per_axis(samples, d)
    ncell = c**d
    per = max(2, samples // ncell)
    cell = L / c
    cell_vol = float(np.prod(cell))
    rows = ss.spawn(c)
    # cell origins for the remaining axes, in fixed order
    if d > 1:
        rest = np.stack(np.meshgrid(*[np.arange(c)] * (d - 1), indexing="ij"), axis=-1).reshape(-1, d - 1)
    else:
        rest = np.zeros((1, 0), int)
    total = 0.0
    var = 0.0
    fd_diff = 0.0
    vscale = 0.0
    for i, row_seed in enumerate(rows):
        rng = np.random.default_rng(row_seed)
        u = rng.random((rest.shape[0], per, d))
        idx = np.concatenate([np.full((rest.shape[0], 1), i), rest], axis=1)
        x = (idx[:, None, :] + u) * cell
        f1, f2, v0 = fd_all(x)
        m1 = f1.mean(axis=1)
        total += cell_vol * m1.sum()
        var += cell_vol**2 * (f1.var(axis=1, ddof=1) / per).sum()
        fd_diff += cell_vol * (m1 - f2.mean(axis=1)).sum()
        vscale += cell_vol * v0.mean(axis=1).sum()
    rnd = 4 * np.finfo(float).eps * vscale / dq
    err = math.sqrt(var + (fd_diff / 3) ** 2) + rnd
    return VolumeResult(float(total), "monte-carlo", float(err), int(per * ncell))


def weyl_prediction(mu: float, c: float, m: float, n: int, mode: str = "sharp", both_branches: bool = False) -> float:
    """Leading Weyl term: ``2C (2pi)^{1-n} mu m^{n-2}`` (sharp) or ``(2pi)^{1-n} hat(0) mu m^{n-2}`` (smoothed).

    ``c`` is the window half-width C in sharp mode and ``hat(0)`` in smoothed
    mode. Counting both branches doubles the prediction.
    """
    if mu < 0:
        raise ValidationError("mu must be nonnegative")
    if m < 1:
        raise ValidationError("m must be at least 1")
    if mode == "sharp":
        out = 2 * c * (2 * math.pi) ** (1 - n) * mu * m ** (n - 2)
    elif mode == "smoothed":
        out = (2 * math.pi) ** (1 - n) * c * mu * m ** (n - 2)
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return 2 * out if both_branches else out


def liouville_volume(metric: StandardStationaryMetric, nu: float, nodes: int = 64) -> VolumeResult:
    """Best available value: closed form for product metrics, quadrature otherwise."""
    if metric.is_product:
        v = volume_closed_form_product(metric.volume, nu, metric.n)
        return VolumeResult(v, "closed-form", 0.0, 0)
    return volume_quadrature(metric, nu, metric.n, nodes)
