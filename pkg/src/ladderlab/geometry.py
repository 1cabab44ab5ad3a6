"""Standard stationary metrics ``-N^2 dt^2 + h(dx + beta dt, dx + beta dt)`` on R x Sigma.

Sigma is a flat torus (fields in closed form or sampled on a uniform grid) or
a round sphere. Points on a torus are coordinate vectors in ``[0, L_i]``;
points on a sphere are embedded vectors of norm ``r`` in R^(d+1), and on
spheres all tensors are expressed in an orthonormal frame (h = I).
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .errors import DomainError, InvariantError, ResolutionError, ValidationError

DEFAULT_RESOLUTION = 64
HORIZON_RTOL = 1e-9


def sphere_area(k: int) -> float:
    """Surface area of the unit sphere S^k in R^(k+1); S^0 is two points."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def parse_length(value) -> float:
    """Accept a number or a string such as ``"2pi"``, ``"pi/2"``, ``"3*pi"``."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).replace(" ", "").lower()
    m = re.fullmatch(r"([0-9.eE+-]*)\*?(pi)?(?:/([0-9.eE+-]+))?", text)
    if not m or (not m.group(1) and not m.group(2)):
        raise ValidationError(f"cannot parse length {value!r}")
    coef = float(m.group(1)) if m.group(1) not in ("", "+", "-") else float(m.group(1) + "1")
    out = coef * (math.pi if m.group(2) else 1.0)
    if m.group(3):
        out /= float(m.group(3))
    return out


# --------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class FlatTorus:
    lengths: tuple[float, ...]

    kind = "flat_torus"

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        if not self.lengths or min(self.lengths) <= 0:
            raise ValidationError("torus side lengths must be positive")

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def coordinate_volume(self) -> float:
        return float(np.prod(self.lengths))

    def default_resolution(self) -> tuple[int, ...]:
        return (DEFAULT_RESOLUTION,) * self.dim

    def nodes(self, resolution=None):
        """Uniform tensor grid; returns ``(points, weights)`` with points shaped (*res, d)."""
        res = _as_resolution(resolution or self.default_resolution(), self.dim)
        axes = [np.arange(r) * (L / r) for r, L in zip(res, self.lengths)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        w = np.full(res, self.coordinate_volume / np.prod(res))
        return pts, w

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected {self.dim} torus coordinates, got shape {x.shape}")
        L = np.asarray(self.lengths)
        tol = 1e-12 * L
        if np.any(x < -tol) or np.any(x > L + tol):
            raise DomainError("point outside the coordinate box [0, L_i]")
        return x

    def wrap(self, x) -> np.ndarray:
        return np.mod(x, np.asarray(self.lengths))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lengths": list(self.lengths)}


@dataclass(frozen=True)
class GriddedTorus(FlatTorus):
    resolution: tuple[int, ...] = ()

    kind = "gridded_torus"

    def __post_init__(self):
        super().__post_init__()
        res = _as_resolution(self.resolution or (DEFAULT_RESOLUTION,) * self.dim, self.dim)
        object.__setattr__(self, "resolution", res)

    def default_resolution(self) -> tuple[int, ...]:
        return self.resolution

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lengths": list(self.lengths), "resolution": list(self.resolution)}


@dataclass(frozen=True)
class RoundSphere:
    dim: int
    radius: float = 1.0

    kind = "round_sphere"

    def __post_init__(self):
        if self.dim < 1 or self.radius <= 0:
            raise ValidationError("sphere needs dim >= 1 and radius > 0")

    @property
    def coordinate_volume(self) -> float:
        return sphere_area(self.dim) * self.radius**self.dim

    def default_resolution(self) -> tuple[int, ...]:
        return (16,) * self.dim

    def nodes(self, resolution=None):
        """Gauss-Jacobi rules in the polar angles times a uniform longitude rule.

        For the 2-sphere this is Gauss-Legendre in cos(polar) x uniform longitude.
        Returns embedded points shaped (N, d+1) and weights summing to the area.
        """
        d = self.dim
        res = _as_resolution(resolution or self.default_resolution(), d)
        angle_sets, weight_sets = [], []
        for j in range(d - 1):
            k = d - 1 - j  # power of sin in the volume element
            u, w = special.roots_jacobi(res[j], (k - 1) / 2, (k - 1) / 2)
            angle_sets.append(np.arccos(u))
            weight_sets.append(w)
        q = res[-1]
        angle_sets.append(np.arange(q) * (2 * np.pi / q))
        weight_sets.append(np.full(q, 2 * np.pi / q))
        grids = np.meshgrid(*angle_sets, indexing="ij")
        wgrid = np.ones_like(grids[0])
        for ax, w in enumerate(np.meshgrid(*weight_sets, indexing="ij")):
            wgrid = wgrid * w
        phis = [g.ravel() for g in grids]
        pts = np.empty((phis[0].size, d + 1))
        s = np.ones(phis[0].size)
        for j, phi in enumerate(phis[:-1]):
            pts[:, j] = s * np.cos(phi)
            s = s * np.sin(phi)
        pts[:, d - 1] = s * np.cos(phis[-1])
        pts[:, d] = s * np.sin(phis[-1])
        return self.radius * pts, wgrid.ravel() * self.radius**d

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim + 1:
            raise DomainError(f"expected embedded points in R^{self.dim + 1}")
        if np.any(np.abs(np.linalg.norm(x, axis=-1) - self.radius) > 1e-9 * self.radius):
            raise DomainError("point is not on the sphere")
        return x

    def wrap(self, x):
        return x

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "radius": self.radius}


def _as_resolution(res, dim: int) -> tuple[int, ...]:
    if isinstance(res, (int, np.integer)):
        res = (int(res),) * dim
    res = tuple(int(r) for r in res)
    if len(res) != dim:
        raise ValidationError(f"resolution needs {dim} entries")
    return res


Surface = FlatTorus | RoundSphere


def surface_from_dict(d: dict) -> Surface:
    kind = d.get("kind")
    if kind == "flat_torus":
        return FlatTorus(tuple(parse_length(v) for v in d["lengths"]))
    if kind == "gridded_torus":
        return GriddedTorus(tuple(parse_length(v) for v in d["lengths"]), tuple(d["resolution"]))
    if kind == "round_sphere":
        return RoundSphere(int(d["dim"]), parse_length(d.get("radius", 1.0)))
    raise ValidationError(f"unknown surface kind {kind!r}")


# --------------------------------------------------------------------------
# scalar fields on Sigma


class ScalarField:
    constant: float | None = None

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantField(ScalarField):
    c: float
    dim: int

    @property
    def constant(self):  # type: ignore[override]
        return self.c

    def value(self, x):
        return np.full(np.shape(x)[:-1], self.c, dtype=float)

    def grad(self, x):
        return np.zeros(np.shape(x)[:-1] + (self.dim,))

    def to_dict(self):
        return {"kind": "constant", "value": self.c}


@dataclass(frozen=True)
class CosineField(ScalarField):
    """``mean + amplitude * cos(2 pi sum_i k_i x_i / L_i + phase)``."""

    mean: float
    amplitude: float
    wavevector: tuple[int, ...]
    lengths: tuple[float, ...]
    phase: float = 0.0

    def _omega(self):
        return 2 * np.pi * np.asarray(self.wavevector, float) / np.asarray(self.lengths)

    def value(self, x):
        arg = np.asarray(x, float) @ self._omega() + self.phase
        return self.mean + self.amplitude * np.cos(arg)

    def grad(self, x):
        om = self._omega()
        arg = np.asarray(x, float) @ om + self.phase
        return -self.amplitude * np.sin(arg)[..., None] * om

    def to_dict(self):
        return {
            "kind": "cosine",
            "mean": self.mean,
            "amplitude": self.amplitude,
            "wavevector": list(self.wavevector),
            "phase": self.phase,
        }


class GridField(ScalarField):
    """Samples on the uniform torus grid, evaluated by trigonometric interpolation."""

    def __init__(self, values, lengths):
        self.values = np.asarray(values, dtype=float)
        self.lengths = tuple(float(v) for v in lengths)
        if self.values.ndim != len(self.lengths):
            raise ValidationError("grid field rank does not match the torus dimension")
        if min(self.values.shape) < 3:
            raise ResolutionError("grid fields need at least 3 nodes per axis")
        self._coef = np.fft.fftn(self.values) / self.values.size
        self._freqs = [
            2 * np.pi * np.fft.fftfreq(M, d=1.0 / M) / L for M, L in zip(self.values.shape, self.lengths)
        ]

    def _phases(self, x):
        x = np.asarray(x, float)
        return [np.exp(1j * x[..., i, None] * f) for i, f in enumerate(self._freqs)]

    def _contract(self, mats):
        # sum_q c[q] prod_i mats[i][..., q_i]
        d = len(mats)
        letters = "abcdefgh"[:d]
        spec = letters + "," + ",".join("z" + ch for ch in letters) + "->z"
        flat = [m.reshape(-1, m.shape[-1]) for m in mats]
        return np.einsum(spec, self._coef, *flat, optimize=True).reshape(mats[0].shape[:-1])

    def value(self, x):
        return self._contract(self._phases(x)).real

    def grad(self, x):
        ph = self._phases(x)
        comps = []
        for i in range(len(ph)):
            mats = list(ph)
            mats[i] = ph[i] * (1j * self._freqs[i])
            comps.append(self._contract(mats).real)
        return np.stack(comps, axis=-1)

    def to_dict(self):
        return {"kind": "grid", "shape": list(self.values.shape), "values": self.values.ravel().tolist()}


def field_from_dict(d, dim: int, lengths=None) -> ScalarField:
    if isinstance(d, (int, float)):
        return ConstantField(float(d), dim)
    kind = d.get("kind")
    if kind == "constant":
        return ConstantField(float(d["value"]), dim)
    if lengths is None and kind in ("cosine", "grid"):
        raise ValidationError(f"{kind} fields are only supported on tori")
    if kind == "cosine":
        wv = tuple(int(k) for k in d.get("wavevector", [1] + [0] * (dim - 1)))
        if len(wv) != dim:
            raise ValidationError("cosine wavevector must have one entry per axis")
        return CosineField(float(d["mean"]), float(d["amplitude"]), wv, tuple(lengths), float(d.get("phase", 0.0)))
    if kind == "grid":
        shape = tuple(int(s) for s in d["shape"])
        vals = np.asarray(d["values"], float)
        if vals.size != int(np.prod(shape)):
            raise ValidationError("grid values do not match the declared shape")
        return GridField(vals.reshape(shape), lengths)
    raise ValidationError(f"unknown field kind {kind!r}")


# --------------------------------------------------------------------------
# the metric


@dataclass(frozen=True)
class StandardStationaryMetric:
    """Lapse ``N``, shift ``beta`` and spatial metric ``h`` on the Cauchy surface."""

    n: int
    surface: Surface
    lapse: ScalarField
    shift: tuple[ScalarField, ...] = ()
    h: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("spacetime dimension must be at least 2")
        if self.surface.dim != self.n - 1:
            raise ValidationError(f"surface dimension {self.surface.dim} != n - 1 = {self.n - 1}")
        d = self.n - 1
        shift = tuple(self.shift) if self.shift else tuple(ConstantField(0.0, d) for _ in range(d))
        if len(shift) != d:
            raise ValidationError("shift needs one component per surface axis")
        object.__setattr__(self, "shift", shift)
        if isinstance(self.surface, RoundSphere):
            if any(f.constant != 0.0 for f in shift):
                raise ValidationError("only a vanishing shift is supported on spheres")
            if self.lapse.constant is None:
                raise ValidationError("only a constant lapse is supported on spheres")
            if self.h is not None:
                raise ValidationError("the round metric is fixed on spheres")
        if self.h is not None:
            hm = np.asarray(self.h, float)
            if hm.shape != (d, d):
                raise ValidationError("h must be a d x d matrix")
            object.__setattr__(self, "h", hm)

    # -- constructors --------------------------------------------------------

    @classmethod
    def product(cls, surface: Surface) -> "StandardStationaryMetric":
        d = surface.dim
        return cls(d + 1, surface, ConstantField(1.0, d))

    @classmethod
    def constant(cls, surface: FlatTorus, N: float, beta: Sequence[float], h=None):
        d = surface.dim
        shift = tuple(ConstantField(float(b), d) for b in beta)
        return cls(d + 1, surface, ConstantField(float(N), d), shift, h)

    @classmethod
    def cosine_lapse(cls, surface: FlatTorus, mean: float, amplitude: float, wavevector=None, beta=None):
        d = surface.dim
        wv = tuple(wavevector) if wavevector is not None else (1,) + (0,) * (d - 1)
        lapse = CosineField(mean, amplitude, wv, surface.lengths)
        shift = tuple(ConstantField(float(b), d) for b in beta) if beta is not None else ()
        return cls(d + 1, surface, lapse, shift)

    # -- properties ----------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.n - 1

    @property
    def is_torus(self) -> bool:
        return isinstance(self.surface, FlatTorus)

    @property
    def is_constant(self) -> bool:
        return self.lapse.constant is not None and all(f.constant is not None for f in self.shift)

    @property
    def is_product(self) -> bool:
        return self.lapse.constant == 1.0 and all(f.constant == 0.0 for f in self.shift)

    @property
    def h_matrix(self) -> np.ndarray:
        return np.eye(self.dim) if self.h is None else self.h

    @property
    def h_inv(self) -> np.ndarray:
        return np.linalg.inv(self.h_matrix)

    @property
    def sqrt_det_h(self) -> float:
        return float(np.sqrt(np.linalg.det(self.h_matrix)))

    @property
    def volume(self) -> float:
        """Riemannian volume of (Sigma, h)."""
        if isinstance(self.surface, RoundSphere):
            return self.surface.coordinate_volume
        return self.surface.coordinate_volume * self.sqrt_det_h

    # -- field evaluation (x may be any shape (..., d); tori are wrapped) ----

    def _pts(self, x):
        x = np.asarray(x, float)
        return self.surface.wrap(x) if self.is_torus else x

    def lapse_at(self, x):
        return self.lapse.value(self._pts(x))

    def lapse_grad(self, x):
        if isinstance(self.surface, RoundSphere):
            return np.zeros(np.shape(x)[:-1] + (self.dim,))
        return self.lapse.grad(self._pts(x))

    def shift_at(self, x):
        x = self._pts(x)
        if isinstance(self.surface, RoundSphere):
            return np.zeros(np.shape(x)[:-1] + (self.dim,))
        return np.stack([f.value(x) for f in self.shift], axis=-1)

    def shift_jac(self, x):
        """``J[..., i, k] = d beta^i / d x_k``."""
        x = self._pts(x)
        if isinstance(self.surface, RoundSphere):
            return np.zeros(np.shape(x)[:-1] + (self.dim, self.dim))
        return np.stack([f.grad(x) for f in self.shift], axis=-2)

    def beta_norm_sq(self, x):
        b = self.shift_at(x)
        return np.einsum("...i,ij,...j->...", b, self.h_matrix, b)

    def bottom_sq(self, x):
        """``N^2 - |beta|_h^2``, the squared bottom height of the unit mass hyperboloid."""
        return self.lapse_at(x) ** 2 - self.beta_norm_sq(x)

    def bottom_sq_grad(self, x):
        N = self.lapse_at(x)
        hb = self.shift_at(x) @ self.h_matrix
        return 2 * N[..., None] * self.lapse_grad(x) - 2 * np.einsum("...ik,...i->...k", self.shift_jac(x), hb)

    def field_extent(self, resolution=None) -> tuple[float, float]:
        """(min, max) of ``N^2 - |beta|_h^2`` over the nodes."""
        pts, _ = self.nodes(resolution)
        B = self.bottom_sq(pts)
        return float(B.min()), float(B.max())

    def nodes(self, resolution=None):
        return self.surface.nodes(resolution)

    # -- validation ----------------------------------------------------------

    def validate(self, resolution=None) -> "StandardStationaryMetric":
        pts, _ = self.nodes(resolution)
        N = self.lapse_at(pts)
        if np.any(N <= 0):
            raise InvariantError("lapse must be positive at every node")
        eig = np.linalg.eigvalsh(self.h_matrix)
        if np.any(eig <= 1e-12 * max(1.0, eig.max())) or not np.allclose(self.h_matrix, self.h_matrix.T):
            raise InvariantError("spatial metric h must be symmetric positive definite")
        if np.any(self.bottom_sq(pts) <= 0):
            raise InvariantError("N^2 - |beta|_h^2 must be positive: Z is not timelike everywhere")
        return self

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        out = {"n": self.n, "surface": self.surface.to_dict(), "lapse": self.lapse.to_dict()}
        if all(f.constant == 0.0 for f in self.shift):
            out["shift"] = {"kind": "zero"}
        elif all(f.constant is not None for f in self.shift):
            out["shift"] = {"kind": "constant", "value": [f.constant for f in self.shift]}
        else:
            out["shift"] = {"kind": "components", "components": [f.to_dict() for f in self.shift]}
        out["h"] = {"kind": "identity"} if self.h is None else {"kind": "constant", "matrix": self.h.tolist()}
        return out

    @classmethod
    def from_dict(cls, d: dict, validate: bool = True) -> "StandardStationaryMetric":
        n = int(d["n"])
        surface = surface_from_dict(d["surface"])
        dim = n - 1
        lengths = surface.lengths if isinstance(surface, FlatTorus) else None
        lapse = field_from_dict(d.get("lapse", {"kind": "constant", "value": 1.0}), dim, lengths)
        sd = d.get("shift", {"kind": "zero"})
        kind = sd.get("kind", "zero")
        if kind == "zero":
            shift: tuple = ()
        elif kind == "constant":
            vals = sd["value"]
            if len(vals) != dim:
                raise ValidationError("constant shift needs one entry per axis")
            shift = tuple(ConstantField(float(v), dim) for v in vals)
        elif kind == "components":
            shift = tuple(field_from_dict(c, dim, lengths) for c in sd["components"])
        else:
            raise ValidationError(f"unknown shift kind {kind!r}")
        hd = d.get("h", {"kind": "identity"})
        h = None if hd.get("kind", "identity") == "identity" else np.asarray(hd["matrix"], float)
        metric = cls(n, surface, lapse, shift, h)
        return metric.validate() if validate else metric


# --------------------------------------------------------------------------
# pointwise tensors


def _frame_point(metric: StandardStationaryMetric, x) -> np.ndarray:
    x = metric.surface.check_point(x)
    return x


def co_metric_at(metric: StandardStationaryMetric, x) -> np.ndarray:
    """Inverse of ``g + d theta^2`` in coordinates ``(t, x_1..x_{n-1}, theta)``."""
    x = _frame_point(metric, x)
    N = float(metric.lapse_at(x))
    if N <= 0:
        raise InvariantError("lapse must be positive")
    if np.any(np.linalg.eigvalsh(metric.h_matrix) <= 0):
        raise InvariantError("h is not positive definite")
    beta = np.asarray(metric.shift_at(x), float).reshape(-1)
    d = metric.dim
    G = np.zeros((d + 2, d + 2))
    G[0, 0] = -1.0 / N**2
    G[0, 1 : d + 1] = G[1 : d + 1, 0] = beta / N**2
    G[1 : d + 1, 1 : d + 1] = metric.h_inv - np.outer(beta, beta) / N**2
    G[d + 1, d + 1] = 1.0
    return G


def metric_at(metric: StandardStationaryMetric, x) -> np.ndarray:
    """The forward metric ``g + d theta^2`` as an (n+1) x (n+1) matrix."""
    x = _frame_point(metric, x)
    N = float(metric.lapse_at(x))
    beta = np.asarray(metric.shift_at(x), float).reshape(-1)
    h = metric.h_matrix
    hb = h @ beta
    d = metric.dim
    g = np.zeros((d + 2, d + 2))
    g[0, 0] = -N**2 + beta @ hb
    g[0, 1 : d + 1] = g[1 : d + 1, 0] = hb
    g[1 : d + 1, 1 : d + 1] = h
    g[d + 1, d + 1] = 1.0
    return g


def killing_norm(metric: StandardStationaryMetric, x) -> float | np.ndarray:
    """``g(Z, Z) = -(N^2 - |beta|_h^2)`` at ``x``."""
    x = _frame_point(metric, x)
    return -metric.bottom_sq(x)


# --------------------------------------------------------------------------
# allowed region and horizon-adapted integration


@dataclass
class AllowedRegion:
    nu: float
    points: np.ndarray
    mask: np.ndarray
    horizon: np.ndarray
    fraction: float
    fraction_error: float


def _cos_gl(p: int):
    """Gauss-Legendre in theta on [0, pi] for the map x = a + (b - a)(1 - cos theta)/2.

    The map clusters nodes at both ends, which absorbs square-root behaviour
    of the integrand at a horizon.
    """
    u, w = np.polynomial.legendre.leggauss(p)
    theta = (u + 1) * (np.pi / 2)
    return theta, w * (np.pi / 2)


def integrate_allowed(
    metric: StandardStationaryMetric,
    nu: float,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    q: int = 64,
    p: int = 48,
) -> float:
    """Integrate ``integrand(x, slack)`` over ``{slack = nu^2 - (N^2 - |beta|^2) > 0}`` w.r.t. dVol_h.

    On tori the last d-1 axes use the periodic trapezoid rule with ``q`` nodes;
    along the first axis each line is split at the horizon roots and every
    allowed piece is integrated with a ``p``-point clustered Gauss rule. Lines
    that never cross the horizon use the periodic trapezoid rule.
    """
    nu2 = nu * nu
    if isinstance(metric.surface, RoundSphere):
        pts, w = metric.surface.nodes()
        slack = nu2 - metric.bottom_sq(pts)
        keep = slack > 0
        if not np.any(keep):
            return 0.0
        return float(np.sum(w[keep] * integrand(pts[keep], slack[keep])))

    surf = metric.surface
    d = surf.dim
    L = surf.lengths
    outer_axes = [np.arange(q) * (L[i] / q) for i in range(1, d)]
    if outer_axes:
        outer = np.stack(np.meshgrid(*outer_axes, indexing="ij"), axis=-1).reshape(-1, d - 1)
    else:
        outer = np.zeros((1, 0))
    outer_w = float(np.prod([L[i] / q for i in range(1, d)])) if d > 1 else 1.0
    L1 = L[0]
    nfine = max(4 * q, 64)
    fine = np.arange(nfine) * (L1 / nfine)
    theta, tw = _cos_gl(p)
    ntrap = 2 * q
    trap = np.arange(ntrap) * (L1 / ntrap)

    def line_points(x1, o):
        return np.column_stack([x1, np.broadcast_to(o, (x1.size, d - 1))])

    full_pts, full_w = [], []
    piece_pts, piece_w = [], []
    for o in outer:
        g = nu2 - metric.bottom_sq(line_points(fine, o))
        pos = g > 0
        if pos.all():
            full_pts.append(line_points(trap, o))
            full_w.append(np.full(ntrap, outer_w * L1 / ntrap))
            continue
        if not pos.any():
            continue
        f = lambda s, o=o: float(nu2 - metric.bottom_sq(line_points(np.array([s]), o))[0])
        roots = []
        for i in range(nfine):
            j = (i + 1) % nfine
            if pos[i] != pos[j]:
                a, b = fine[i], fine[i] + L1 / nfine
                roots.append(optimize.brentq(f, a, b, xtol=1e-14 * L1, rtol=4 * np.finfo(float).eps))
        roots.sort()
        ends = roots + [roots[0] + L1]
        for a, b in zip(ends[:-1], ends[1:]):
            if f(((a + b) / 2) % L1) <= 0:
                continue
            x1 = a + (b - a) * (1 - np.cos(theta)) / 2
            piece_pts.append(line_points(np.mod(x1, L1), o))
            piece_w.append(outer_w * tw * (b - a) / 2 * np.sin(theta))
    total = 0.0
    for pts_list, w_list in ((full_pts, full_w), (piece_pts, piece_w)):
        if not pts_list:
            continue
        pts = np.concatenate(pts_list)
        w = np.concatenate(w_list)
        slack = np.maximum(nu2 - metric.bottom_sq(pts), 0.0)
        total += float(np.sum(w * integrand(pts, slack)))
    return total * metric.sqrt_det_h


def allowed_region(metric: StandardStationaryMetric, nu: float, resolution=None, q: int = 64) -> AllowedRegion:
    """Indicator of ``{N^2 - |beta|_h^2 < nu^2}`` on the nodes plus its measure fraction.

    Nodes with ``|nu^2 - (N^2 - |beta|^2)| <= 1e-9 nu^2`` are horizon points and
    belong to neither the allowed nor the forbidden set.
    """
    if nu <= 0:
        raise ValidationError("nu must be positive")
    pts, _ = metric.nodes(resolution)
    gap = nu * nu - metric.bottom_sq(pts)
    horizon = np.abs(gap) <= HORIZON_RTOL * nu * nu
    mask = (gap > 0) & ~horizon
    one = lambda x, s: np.ones(len(x))
    frac_q = integrate_allowed(metric, nu, one, q=q, p=32) / metric.volume
    frac_2q = integrate_allowed(metric, nu, one, q=2 * q, p=64) / metric.volume
    frac = min(1.0, max(0.0, frac_2q))  # quadrature roundoff can step outside [0, 1]
    return AllowedRegion(nu, pts, mask, horizon, frac, abs(frac_2q - frac_q))


# --------------------------------------------------------------------------
# admissibility


ADMISSIBLE = "Admissible"
CRITICAL = "CriticalLevel"
EMPTY = "EmptyLadder"


@dataclass
class AdmissibilityReport:
    nu: float
    verdict: str
    bottom_range: tuple[float, float]
    critical_values: list[float]
    critical_points: np.ndarray = field(repr=False, default_factory=lambda: np.zeros((0, 0)))

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "verdict": self.verdict,
            "bottom_range": list(self.bottom_range),
            "critical_values": list(self.critical_values),
        }


def _fd_gradient(B: np.ndarray, lengths) -> np.ndarray:
    comps = []
    for ax, L in enumerate(lengths):
        h = L / B.shape[ax]
        comps.append((np.roll(B, -1, axis=ax) - np.roll(B, 1, axis=ax)) / (2 * h))
    return np.stack(comps, axis=-1)


def _local_minima(F: np.ndarray) -> np.ndarray:
    keep = np.ones(F.shape, bool)
    for ax in range(F.ndim):
        keep &= F <= np.roll(F, 1, axis=ax)
        keep &= F <= np.roll(F, -1, axis=ax)
    return keep


def find_critical_points(metric: StandardStationaryMetric, resolution=None, grad_tol=None, max_candidates=256):
    """Critical points of ``N^2 - |beta|_h^2``: grid candidates from centered differences, refined by Newton.

    Returns ``(points, values)`` where values are the bottom heights sqrt(N^2 - |beta|^2).
    """
    if isinstance(metric.surface, RoundSphere):
        pts, _ = metric.nodes(resolution)
        B = float(metric.bottom_sq(pts[:1])[0])
        return pts[:1], np.array([math.sqrt(B)])
    res = _as_resolution(resolution or metric.surface.default_resolution(), metric.dim)
    if min(res) < 3:
        raise ResolutionError("need at least 3 grid nodes per axis to estimate gradients")
    pts, _ = metric.nodes(res)
    B = metric.bottom_sq(pts)
    scale = max(float(np.abs(B).max()), 1e-300) * 2 * np.pi / min(metric.surface.lengths)
    tol = grad_tol if grad_tol is not None else 1e-6 * scale
    G = np.linalg.norm(_fd_gradient(B, metric.surface.lengths), axis=-1)
    cand = _local_minima(G)
    idx = np.argwhere(cand)
    order = np.argsort(G[cand], kind="stable")
    idx = idx[order][:max_candidates]
    found = []
    for ij in idx:
        x0 = pts[tuple(ij)]
        g0 = metric.bottom_sq_grad(x0[None])[0]
        if np.linalg.norm(g0) < tol:
            found.append(x0)
            continue
        sol = optimize.root(lambda y: metric.bottom_sq_grad(y[None])[0], x0, method="hybr", options={"xtol": 1e-14})
        y = metric.surface.wrap(sol.x)
        if np.linalg.norm(metric.bottom_sq_grad(y[None])[0]) < tol:
            found.append(y)
    if not found:
        return np.zeros((0, metric.dim)), np.zeros(0)
    P = np.array(found)
    vals = np.sqrt(metric.bottom_sq(P))
    return P, vals


def _dedupe(values, rtol=1e-10) -> list[float]:
    out: list[float] = []
    for v in sorted(float(x) for x in values):
        if not out or abs(v - out[-1]) > rtol * max(1.0, abs(v)):
            out.append(v)
    return out


def classify_admissibility(
    metric: StandardStationaryMetric,
    nu: float,
    grad_tol: float | None = None,
    level_rtol: float = 1e-9,
    resolution=None,
) -> AdmissibilityReport:
    """Classify the ladder slope ``nu``.

    ``CriticalLevel`` when nu equals the bottom height at a critical point of
    ``N^2 - |beta|^2``; ``EmptyLadder`` when nu lies below the minimal bottom
    height; ``Admissible`` otherwise.
    """
    if nu <= 0:
        raise ValidationError("nu must be positive")
    if grad_tol is not None and grad_tol <= 0:
        raise ValidationError("grad_tol must be positive")
    P, vals = find_critical_points(metric, resolution, grad_tol)
    pts, _ = metric.nodes(resolution)
    B = metric.bottom_sq(pts)
    lo = float(np.sqrt(B.min()))
    hi = float(np.sqrt(B.max()))
    if vals.size:
        lo = min(lo, float(vals.min()))
        hi = max(hi, float(vals.max()))
    crit = _dedupe(vals)
    if any(abs(nu - c) <= level_rtol * nu for c in crit):
        verdict = CRITICAL
    elif nu < lo:
        verdict = EMPTY
    else:
        verdict = ADMISSIBLE
    return AdmissibilityReport(nu, verdict, (lo, hi), crit, P)


def require_admissible(metric, nu, **kw) -> AdmissibilityReport:
    from .errors import CriticalLevelError, EmptyLadderError

    rep = classify_admissibility(metric, nu, **kw)
    if rep.verdict == EMPTY:
        raise EmptyLadderError(
            f"nu={nu} is below the minimal bottom height {rep.bottom_range[0]:.6g}: the ladder is empty"
        )
    if rep.verdict == CRITICAL:
        raise CriticalLevelError(f"nu={nu} is a critical level (critical values {rep.critical_values})")
    return rep


def warn_if_near_critical(metric, nu, width: float) -> None:
    _, vals = find_critical_points(metric)
    if any(abs(nu - v) <= width for v in vals):
        warnings.warn(f"nu={nu} lies within {width:g} of a critical level", RuntimeWarning, stacklevel=3)
