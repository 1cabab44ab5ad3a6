"""Even Schwartz test functions with compactly supported Fourier transform.

Convention: ``hat(xi) = int psi(x) exp(-i x xi) dx``, so
``psi(x) = (1/pi) int_0^a hat(t) cos(x t) dt`` and ``hat(0) = int psi``.

Two profiles:

* ``"bump"``: ``hat(t) = e * exp(-1/(1 - (t/a)^2))`` on ``|t| < a``, so ``hat(0) = 1``;
* ``"autocorrelation"``: ``hat = b * b`` (convolution) with ``b`` a bump of
  radius ``a/2`` normalized so that ``hat(0) = 1``. Then ``psi = 2 pi (b_check)^2 >= 0``
  and ``hat >= 0``.

Inverse transforms use the trapezoid rule on ``[-a, a]``: the integrand
vanishes to all orders at the ends, so the rule converges faster than any
power, and the only error is aliasing from ``psi`` at distance ``2 pi / dt``.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import ValidationError

_E = math.e


def bump(t, a: float) -> np.ndarray:
    """``e * exp(-1/(1 - (t/a)^2))`` on ``|t| < a``, zero elsewhere; equals 1 at 0."""
    t = np.asarray(t, dtype=float)
    u = (t / a) ** 2
    out = np.zeros_like(t)
    inside = u < 1
    out[inside] = _E * np.exp(-1.0 / (1.0 - u[inside]))
    return out


def _trap_count(a: float, xmax: float, min_nodes: int = 1024) -> int:
    """Intervals on [0, a] keeping trapezoid aliasing beyond ``3 xmax``."""
    dt_alias = math.pi / (2 * max(xmax, 8.0 / a))
    return max(min_nodes, int(math.ceil(a / dt_alias)))


def _trap_weights(t: np.ndarray) -> np.ndarray:
    w = np.full(t.size, t[1] - t[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def cosine_transform(t, hat_vals, x, deriv: bool = False, chunk: int = 4096) -> np.ndarray:
    """``(1/pi) int_0^a hat(t) cos(x t) dt`` (or its x-derivative) from samples on a uniform grid ``t``."""
    x = np.asarray(x, dtype=float)
    flat = np.abs(x.ravel())
    wh = _trap_weights(t) * hat_vals / math.pi
    out = np.empty(flat.size)
    for s in range(0, flat.size, chunk):
        arg = np.outer(flat[s : s + chunk], t)
        if deriv:
            out[s : s + chunk] = -(np.sin(arg) * t) @ wh
        else:
            out[s : s + chunk] = np.cos(arg) @ wh
    if deriv:
        out = out * np.sign(x.ravel())
    return out.reshape(x.shape)


def sine_integral_transform(t, hat_vals, y, chunk: int = 4096) -> np.ndarray:
    """``(1/pi) int_0^a hat(t) sin(y t)/t dt`` from samples on a uniform grid ``t``."""
    y = np.asarray(y, dtype=float)
    flat = y.ravel()
    wh = _trap_weights(t) * hat_vals / math.pi
    tt = np.where(t > 0, t, 1.0)
    out = np.empty(flat.size)
    for s in range(0, flat.size, chunk):
        yy = flat[s : s + chunk, None]
        k = np.where(t > 0, np.sin(yy * t) / tt, yy)
        out[s : s + chunk] = k @ wh
    return out.reshape(y.shape)


class TestFunction:
    """Test function ``psi`` given by its Fourier transform supported in ``[-a, a]``.

    Parameters
    ----------
    hat_support_radius : float
        Radius ``a`` of the support of ``hat``.
    profile : {"bump", "autocorrelation"}
        ``"autocorrelation"`` yields ``psi >= 0`` and ``hat >= 0`` (``nonneg`` flag).
    tol : float
        Relative threshold defining the effective radius: ``|psi(x)| < tol * psi(0)``
        for ``|x| > effective_radius``.
    delta : float
        Scale; the object represents ``psi_delta(x) = psi(x/delta)/delta`` whose
        transform is ``hat(delta xi)``.
    """

    __test__ = False  # not a pytest class

    def __init__(self, hat_support_radius: float = 0.5, profile: str = "bump", tol: float = 1e-10, delta: float = 1.0):
        a = float(hat_support_radius)
        if not a > 0:
            raise ValidationError("hat support radius must be positive")
        if profile not in ("bump", "autocorrelation"):
            raise ValidationError(f"unknown profile {profile!r}")
        if not (0 < tol < 1) or not delta > 0:
            raise ValidationError("need 0 < tol < 1 and delta > 0")
        self.a = a
        self.profile = profile
        self.tol = float(tol)
        self.delta = float(delta)
        self._base = None
        self._c = None

    # -- base (delta = 1) function --------------------------------------------

    @property
    def nonneg(self) -> bool:
        return self.profile == "autocorrelation"

    @property
    def hat0(self) -> float:
        """Recorded normalization ``hat(0)``."""
        return 1.0

    def _bnorm(self) -> float:
        # b = c * bump_{a/2} with hat(0) = int b^2 = 1
        if self._c is None:
            r = self.a / 2
            t = np.linspace(-r, r, 4097)
            self._c = 1.0 / math.sqrt(np.trapezoid(bump(t, r) ** 2, t))
        return self._c

    def _base_hat(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.profile == "bump":
            return bump(t, self.a)
        r = self.a / 2
        c = self._bnorm()
        s = np.linspace(-r, r, 2049)
        bs = bump(s, r)
        flat = t.ravel()
        out = np.empty(flat.size)
        for i in range(0, flat.size, 1024):
            out[i : i + 1024] = bump(flat[i : i + 1024, None] - s, r) @ bs
        return (c * c * (s[1] - s[0]) * out).reshape(t.shape)

    def _hat_grid(self, xmax: float):
        """Uniform nodes on [0, a] with ``hat`` sampled on them, fine enough for ``|x| <= xmax``."""
        if self.profile == "bump":
            n = _trap_count(self.a, xmax)
            t = np.linspace(0.0, self.a, n + 1)
            return t, bump(t, self.a)
        # hat = c^2 (b * b): discrete convolution on a grid of spacing r/M
        r = self.a / 2
        M = _trap_count(r, xmax)
        s = np.linspace(-r, r, 2 * M + 1)
        ds = s[1] - s[0]
        conv = np.convolve(bump(s, r), bump(s, r)) * ds * self._bnorm() ** 2
        t = np.arange(2 * M + 1) * ds
        return t, conv[2 * M :]

    def _base_direct(self, x, deriv=False):
        x = np.asarray(x, dtype=float)
        xmax = float(np.abs(x).max()) if x.size else 0.0
        if self.profile == "bump":
            t, hv = self._hat_grid(xmax)
            return cosine_transform(t, hv, x, deriv)
        r = self.a / 2
        n = _trap_count(r, xmax)
        t = np.linspace(0.0, r, n + 1)
        bv = self._bnorm() * bump(t, r)
        b = cosine_transform(t, bv, x)
        if deriv:
            return 4 * math.pi * b * cosine_transform(t, bv, x, True)
        return 2 * math.pi * b * b

    def _base_data(self) -> dict:
        if self._base is not None:
            return self._base
        a = self.a
        p0 = float(self._base_direct(np.array([0.0]))[0])
        # effective radius by doubling search on a coarse scan
        R = 16.0 / a
        while True:
            xs = np.linspace(R / 2, R, 2048)
            if np.abs(self._base_direct(xs)).max() < self.tol * abs(p0) or R > 1e8 / a:
                break
            R *= 2
        h = 4.5e-3 / a
        n = int(math.ceil(R / h)) + 1
        grid = np.arange(n) * h
        vals = self._base_direct(grid)
        above = np.flatnonzero(np.abs(vals) >= self.tol * abs(p0))
        X = float(grid[above[-1] + 1]) if above.size and above[-1] + 1 < n else float(grid[-1])
        last = int(round(X / h))
        tail = float(np.trapezoid(np.abs(vals[last:]), grid[last:])) if last < n - 1 else 0.0
        grid = grid[: last + 1]
        self._base = dict(
            psi0=p0,
            X=X,
            h=h,
            y=np.ascontiguousarray(vals[: last + 1]),
            dy=np.ascontiguousarray(self._base_direct(grid, True)),
            tail=tail,
        )
        return self._base

    # -- public API (delta-scaled) --------------------------------------------

    def hat(self, xi) -> np.ndarray:
        return self._base_hat(self.delta * np.asarray(xi, dtype=float))

    @property
    def hat_support_radius(self) -> float:
        return self.a / self.delta

    @property
    def effective_radius(self) -> float:
        return self._base_data()["X"] * self.delta

    @property
    def psi0(self) -> float:
        return self._base_data()["psi0"] / self.delta

    @property
    def tail_integral(self) -> float:
        """Estimate of ``int_{|x| > X} |psi|`` on one side."""
        return self._base_data()["tail"]

    @property
    def table(self):
        d = self._base_data()
        return d["y"], d["dy"], d["h"]

    def __call__(self, x) -> np.ndarray:
        y, dy, h = self.table
        x = np.asarray(x, dtype=float)
        return kernels.hermite_eval(x / self.delta, y, dy, h) / self.delta

    def weighted_sum(self, x, w) -> float:
        """``sum_i w[i] psi(x[i])`` through the compiled kernel."""
        y, dy, h = self.table
        x = np.ascontiguousarray(np.asarray(x, dtype=float) / self.delta)
        w = np.ascontiguousarray(w, dtype=float)
        return kernels.hermite_sum(x, w, y, dy, h) / self.delta

    def direct(self, x) -> np.ndarray:
        """``psi`` by direct quadrature (no table)."""
        return self._base_direct(np.asarray(x, dtype=float) / self.delta) / self.delta

    def cdf(self, y) -> np.ndarray:
        """``int_{-inf}^y psi``."""
        y = np.asarray(y, dtype=float) / self.delta
        ymax = float(np.abs(y).max()) if y.size else 0.0
        t, hv = self._hat_grid(ymax)
        return 0.5 * self.hat0 + sine_integral_transform(t, hv, y)

    def chi(self, x, C: float) -> np.ndarray:
        """Mollified indicator ``(psi_delta * 1_[-C, C])(x)``."""
        x = np.asarray(x, dtype=float)
        return self.cdf(x + C) - self.cdf(x - C)

    def tail_probability(self, gamma) -> np.ndarray:
        """``int_{|x| > gamma} psi`` (meaningful as a probability when ``nonneg``)."""
        g = np.asarray(gamma, dtype=float)
        return np.clip(2.0 * (self.hat0 - self.cdf(np.abs(g))), 0.0, None)

    def scaled(self, delta: float) -> "TestFunction":
        out = TestFunction(self.a, self.profile, self.tol, delta * self.delta)
        out._base = self._base_data()
        out._c = self._c
        return out

    def describe(self) -> dict:
        return {
            "hat_support_radius": self.a,
            "profile": self.profile,
            "delta": self.delta,
            "tol": self.tol,
            "hat0": self.hat0,
            "nonneg": self.nonneg,
        }
