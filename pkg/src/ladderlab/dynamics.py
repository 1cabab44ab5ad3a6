"""Mass-shell geodesic flow for standard stationary metrics and its periods.

Phase space coordinates are ``(x, xi, t, tau)`` with the Hamiltonian

    H = 1/2 g^-1(zeta, zeta) = 1/2 (-(tau - beta.xi)^2 / N^2 + xi^T h^-1 xi),

restricted to the unit mass shell ``H = -1/2``. ``tau`` is conserved because
``H`` does not depend on ``t``; on the future sheet ``tau > 0``. The flow is
integrated in the affine parameter ``s``; coordinate-time periods are the
returns ``|t(s) - t(0)|``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .errors import (
    DomainError,
    EmptyLadderError,
    IntegrationError,
    StiffnessError,
    ValidationError,
)
from .geometry import FlatTorus, RoundSphere, StandardStationaryMetric

FUTURE = "future"
PAST = "past"
SHELL_TOL = 1e-10
DRIFT_CAP = 1e-6
ORBIT_TOL = 1e-8
DEFAULT_STEP = 0.05


def _h_inv(metric: StandardStationaryMetric) -> np.ndarray:
    return metric.h_inv if metric.is_torus else np.eye(metric.dim)


def mass_shell_tau(metric: StandardStationaryMetric, x, xi, sheet: str = FUTURE) -> float:
    """``tau = beta.xi +/- N sqrt(h^-1(xi, xi) + 1)``; ``+`` on the future sheet."""
    if sheet not in (FUTURE, PAST):
        raise ValidationError(f"unknown sheet {sheet!r}")
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    N = float(metric.lapse_at(x))
    b = metric.shift_at(x)
    q = float(xi @ _h_inv(metric) @ xi)
    root = N * math.sqrt(q + 1.0)
    return float(b @ xi) + (root if sheet == FUTURE else -root)


@dataclass
class PhaseState:
    x: np.ndarray
    t: float
    xi: np.ndarray
    tau: float
    sheet: str = FUTURE

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, float))
        self.xi = np.atleast_1d(np.asarray(self.xi, float))
        if self.x.shape != self.xi.shape:
            raise ValidationError("x and xi must have the same length")
        if self.sheet not in (FUTURE, PAST):
            raise ValidationError(f"unknown sheet {self.sheet!r}")
        self.t = float(self.t)
        self.tau = float(self.tau)

    @classmethod
    def on_shell(cls, metric, x, xi, t: float = 0.0, sheet: str = FUTURE) -> "PhaseState":
        return cls(x, t, xi, mass_shell_tau(metric, x, xi, sheet), sheet)

    def reflected(self) -> "PhaseState":
        """Image under ``(tau, xi) -> (-tau, -xi)``, which swaps the two sheets."""
        other = PAST if self.sheet == FUTURE else FUTURE
        return PhaseState(self.x.copy(), self.t, -self.xi, -self.tau, other)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.xi, [self.t, self.tau]])

    @classmethod
    def from_vector(cls, y, sheet: str = FUTURE) -> "PhaseState":
        d = (len(y) - 2) // 2
        return cls(y[:d], y[2 * d], y[d : 2 * d], y[2 * d + 1], sheet)


def state_on_level(metric: StandardStationaryMetric, x, direction, nu: float, t: float = 0.0) -> PhaseState:
    """Future-sheet state at ``x`` with ``tau = nu`` and ``xi`` along ``direction``.

    ``xi = r e`` with ``e`` the ``direction`` normalized in ``h^-1`` and ``r >= 0``
    the root of ``beta.e r + N sqrt(r^2 + 1) = nu``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    e = np.atleast_1d(np.asarray(direction, float))
    hinv = _h_inv(metric)
    ne = float(e @ hinv @ e)
    if ne <= 0:
        raise ValidationError("direction must be nonzero")
    e = e / math.sqrt(ne)
    N = float(metric.lapse_at(x))
    b = float(metric.shift_at(x) @ e)
    disc = nu * nu - N * N + b * b
    if disc < 0:
        raise DomainError(f"no momentum along this direction reaches tau={nu} at x={x}")
    r = (-nu * b + N * math.sqrt(disc)) / (N * N - b * b)
    if r < 0:
        raise DomainError(f"tau={nu} is below the shell minimum along this direction at x={x}")
    return PhaseState(x, t, r * e, nu)


# --------------------------------------------------------------------------
# Hamiltonian and vector field


def _split(Y, d):
    return Y[..., :d], Y[..., d : 2 * d], Y[..., 2 * d + 1]


def hamiltonian(metric: StandardStationaryMetric, Y) -> np.ndarray:
    """``H`` on stacked state vectors ``(..., 2d + 2)``."""
    Y = np.asarray(Y, float)
    d = metric.dim
    x, xi, tau = _split(Y, d)
    N = metric.lapse_at(x)
    u = tau - np.einsum("...i,...i->...", metric.shift_at(x), xi)
    q = np.einsum("...i,ij,...j->...", xi, _h_inv(metric), xi)
    return 0.5 * (-(u**2) / N**2 + q)


def shell_residual(metric: StandardStationaryMetric, state: PhaseState) -> float:
    """``g^-1(zeta, zeta) + 1``, zero on the unit mass shell."""
    return float(2 * hamiltonian(metric, state.as_vector()) + 1)


def vector_field(metric: StandardStationaryMetric, Y) -> np.ndarray:
    """Hamilton's equations on stacked states ``(k, 2d + 2)``."""
    d = metric.dim
    x, xi, tau = _split(Y, d)
    N = metric.lapse_at(x)
    dN = metric.lapse_grad(x)
    beta = metric.shift_at(x)
    J = metric.shift_jac(x)
    u = tau - np.einsum("...i,...i->...", beta, xi)
    N2 = N * N
    out = np.empty_like(Y)
    out[..., :d] = (u / N2)[..., None] * beta + xi @ _h_inv(metric)
    dbxi = np.einsum("...ik,...i->...k", J, xi)
    out[..., d : 2 * d] = -((u / N2)[..., None] * dbxi + (u * u / (N2 * N))[..., None] * dN)
    out[..., 2 * d] = -u / N2
    out[..., 2 * d + 1] = 0.0
    return out


# --------------------------------------------------------------------------
# integrators

_S15 = math.sqrt(15.0)
_S3 = math.sqrt(3.0)
GAUSS_TABLEAUX = {
    "midpoint": (np.array([[0.5]]), np.array([1.0])),
    "gauss4": (
        np.array([[0.25, 0.25 - _S3 / 6], [0.25 + _S3 / 6, 0.25]]),
        np.array([0.5, 0.5]),
    ),
    "gauss6": (
        np.array(
            [
                [5 / 36, 2 / 9 - _S15 / 15, 5 / 36 - _S15 / 30],
                [5 / 36 + _S15 / 24, 2 / 9, 5 / 36 - _S15 / 24],
                [5 / 36 + _S15 / 30, 2 / 9 + _S15 / 15, 5 / 36],
            ]
        ),
        np.array([5 / 18, 4 / 9, 5 / 18]),
    ),
}
INTEGRATORS = tuple(GAUSS_TABLEAUX) + ("dop853",)
ORDERS = {"midpoint": 2, "gauss4": 4, "gauss6": 6, "dop853": 8}


@dataclass
class Trajectory:
    s: np.ndarray
    Y: np.ndarray = field(repr=False)
    dim: int
    integrator: str
    step: float | None
    shell: np.ndarray = field(repr=False)

    @property
    def x(self):
        return self.Y[:, : self.dim]

    @property
    def xi(self):
        return self.Y[:, self.dim : 2 * self.dim]

    @property
    def t(self):
        return self.Y[:, 2 * self.dim]

    @property
    def tau(self):
        return self.Y[:, 2 * self.dim + 1]

    @property
    def shell_drift(self) -> float:
        return float(np.abs(self.shell - self.shell[0]).max())

    @property
    def tau_drift(self) -> float:
        return float(np.abs(self.tau - self.tau[0]).max())

    def __len__(self):
        return self.s.size

    def state(self, i: int) -> PhaseState:
        return PhaseState.from_vector(self.Y[i])

    @property
    def final(self) -> PhaseState:
        return self.state(-1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.dim
        w.writerow(["s", "t"] + [f"x{i}" for i in range(d)] + [f"xi{i}" for i in range(d)] + ["tau", "shell_residual"])
        for s, y, r in zip(self.s, self.Y, self.shell):
            w.writerow([format(float(v), ".17g") for v in [s, y[2 * d], *y[:d], *y[d : 2 * d], y[2 * d + 1], r]])
        return buf.getvalue()


def _gauss_step(metric, y, h, A, b, K, tol=1e-15, max_iter=60):
    """One collocation step; ``K`` holds the stage slopes and is updated in place."""
    s = b.size
    for _ in range(max_iter):
        stages = y[None, :] + h * (A @ K)
        new = vector_field(metric, stages)
        delta = float(np.abs(new - K).max()) * abs(h)
        K[:] = new
        if delta <= tol * (1.0 + float(np.abs(y).max())):
            return K
    raise StiffnessError(f"implicit stage equations did not converge in {max_iter} iterations (step {h:g})")


def flow(
    metric: StandardStationaryMetric,
    state: PhaseState,
    duration: float,
    step: float | None = None,
    integrator: str = "gauss6",
    record_every: int = 1,
    rtol: float = 1e-13,
) -> Trajectory:
    """Integrate the mass-shell flow for affine time ``duration`` (negative runs backward).

    Parameters
    ----------
    step : float, optional
        Fixed step for the collocation integrators; defaults to ``DEFAULT_STEP``.
        Ignored by ``"dop853"``, which is adaptive.
    integrator : {"gauss6", "gauss4", "midpoint", "dop853"}
        Gauss collocation methods are symplectic and symmetric; ``"dop853"``
        is the adaptive embedded Runge-Kutta pair, used to diagnose stiffness.
    record_every : int
        Keep every ``record_every``-th step (the endpoints are always kept).

    Raises
    ------
    StiffnessError
        Adaptive step rejection cascade, or non-converging implicit stages.
    IntegrationError
        Shell value drifting more than ``1e-6`` from its initial value.
    """
    if not metric.is_torus:
        raise ValidationError("the flow is implemented on tori only")
    if state.sheet != FUTURE:
        raise ValidationError("past-sheet states are not integrated; use state.reflected()")
    if integrator not in INTEGRATORS:
        raise ValidationError(f"unknown integrator {integrator!r}; choose from {INTEGRATORS}")
    if state.x.size != metric.dim:
        raise ValidationError("state dimension does not match the metric")
    res0 = shell_residual(metric, state)
    if abs(res0) > 1e-8:
        raise ValidationError(f"state is off the mass shell (residual {res0:.3g})")
    if record_every < 1:
        raise ValidationError("record_every must be at least 1")
    y0 = state.as_vector()
    d = metric.dim
    duration = float(duration)
    if duration == 0:
        return Trajectory(np.zeros(1), y0[None, :].copy(), d, integrator, step, np.array([res0]))

    if integrator == "dop853":
        def rhs(_, y):
            return vector_field(metric, y[None, :])[0]

        sol = solve_ivp(rhs, (0.0, duration), y0, method="DOP853", rtol=rtol, atol=rtol, dense_output=False)
        if sol.status != 0:
            raise StiffnessError(f"adaptive integration failed: {sol.message}")
        ss, Y = sol.t, sol.y.T
        keep = np.unique(np.r_[np.arange(0, ss.size, record_every), ss.size - 1])
        ss, Y = ss[keep], Y[keep]
        shell = 2 * hamiltonian(metric, Y) + 1
        if np.abs(shell - res0).max() > DRIFT_CAP:
            raise IntegrationError(f"shell drift {np.abs(shell - res0).max():.3g} exceeds {DRIFT_CAP:g}")
        return Trajectory(ss, Y, d, integrator, None, shell)

    step = DEFAULT_STEP if step is None else float(step)
    if not step > 0:
        raise ValidationError("step must be positive")
    A, b = GAUSS_TABLEAUX[integrator]
    nsteps = max(1, int(math.ceil(abs(duration) / step - 1e-12)))
    h = duration / nsteps
    y = y0.copy()
    comp = np.zeros_like(y)
    K = np.repeat(vector_field(metric, y[None, :]), b.size, axis=0)
    out_s, out_Y, out_r = [0.0], [y.copy()], [res0]
    for i in range(1, nsteps + 1):
        _gauss_step(metric, y, h, A, b, K)
        # compensated update keeps roundoff from accumulating over many steps
        inc = h * (b @ K) - comp
        ynew = y + inc
        comp = (ynew - y) - inc
        y = ynew
        r = float(2 * hamiltonian(metric, y) + 1)
        if abs(r - res0) > DRIFT_CAP:
            raise IntegrationError(f"shell drift {abs(r - res0):.3g} exceeds {DRIFT_CAP:g} at s={i * h:.6g}")
        if i % record_every == 0 or i == nsteps:
            out_s.append(i * h)
            out_Y.append(y.copy())
            out_r.append(r)
    return Trajectory(np.asarray(out_s), np.asarray(out_Y), d, integrator, step, np.asarray(out_r))


# --------------------------------------------------------------------------
# Lorentz factor


def lorentz_factor(N: float, beta_sq: float, v: float) -> float:
    """``nu = sqrt(N^2 - |beta|^2) / sqrt(1 - v^2)``."""
    if not 0 <= v < 1:
        raise DomainError("speed must lie in [0, 1)")
    B = N * N - beta_sq
    if B <= 0:
        raise DomainError("N^2 - |beta|^2 must be positive")
    return math.sqrt(B) / math.sqrt(1 - v * v)


def spatial_speed(N: float, beta_sq: float, nu: float) -> float:
    """``v = sqrt(1 - (N^2 - |beta|^2) / nu^2)``."""
    B = N * N - beta_sq
    if nu <= 0 or nu * nu < B * (1 - 1e-12):
        raise DomainError(f"nu={nu} lies in the forbidden region (nu^2 < N^2 - |beta|^2 = {B:.17g})")
    return math.sqrt(max(0.0, 1.0 - B / (nu * nu)))


def lorentz_diagnostics(metric: StandardStationaryMetric, state: PhaseState) -> tuple[float, float]:
    """``(nu, v)`` at ``state``, with ``nu = tau``; checks the round trip to ``1e-10``."""
    if state.sheet != FUTURE:
        raise ValidationError("state must lie on the future sheet")
    nu = state.tau
    N = float(metric.lapse_at(state.x))
    bsq = float(metric.beta_norm_sq(state.x))
    v = spatial_speed(N, bsq, nu)
    back = lorentz_factor(N, bsq, v) if v < 1 else math.inf
    if abs(back - nu) > 1e-10 * max(1.0, nu):
        raise ValidationError(f"Lorentz round trip failed: {back!r} vs {nu!r}")
    return nu, v


# --------------------------------------------------------------------------
# period sets


@dataclass
class PeriodEntry:
    period: float
    descriptor: str
    holonomy: float = 0.0


@dataclass
class PeriodSet:
    """Coordinate-time periods of the flow on the level ``tau = nu``.

    ``holonomy`` is the affine duration of each orbit, which is also the angle
    swept along the mass fibre.
    """

    nu: float
    entries: list[PeriodEntry]
    method: str
    periodic_flow: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def periods(self) -> list[float]:
        return [e.period for e in self.entries]

    @property
    def holonomies(self) -> list[float]:
        return [e.holonomy for e in self.entries]

    def check(self) -> "PeriodSet":
        if not self.entries:
            return self
        ps = np.array(self.periods)
        if np.abs(ps).min() > 1e-12:
            raise ValidationError("period set must contain 0")
        for p in ps:
            if np.abs(ps + p).min() > 1e-9 * max(1.0, abs(p)):
                raise ValidationError(f"period set not closed under negation at {p}")
        return self

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "method": self.method,
            "periodic_flow": self.periodic_flow,
            "entries": [
                {"period": e.period, "descriptor": e.descriptor, "holonomy": e.holonomy} for e in self.entries
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodSet":
        ents = [PeriodEntry(float(e["period"]), str(e["descriptor"]), float(e.get("holonomy", 0.0))) for e in d["entries"]]
        return cls(float(d["nu"]), ents, d["method"], bool(d.get("periodic_flow", False)), dict(d.get("meta", {})))


def _signed(entries: list[PeriodEntry]) -> list[PeriodEntry]:
    out = [PeriodEntry(0.0, "0", 0.0)]
    for e in entries:
        out.append(e)
        out.append(PeriodEntry(-e.period, "-" + e.descriptor, -e.holonomy))
    out.sort(key=lambda e: (e.period, e.descriptor))
    return out


def _winding_label(w) -> str:
    return "w=(" + ",".join(str(int(k)) for k in w) + ")"


def constant_torus_period(N: float, beta, h, lengths, w, nu: float) -> tuple[float, float]:
    """(coordinate-time period, affine duration) of the straight orbit with winding ``w``.

    The orbit moves, in increasing coordinate time, with velocity ``c e`` where ``e`` is the
    ``h``-unit vector along the lattice vector and ``c`` solves
    ``nu^2 (D - c^2 - 2 c p) = (D - c p)^2`` with ``D = N^2 - |beta|^2``, ``p = h(beta, e)``.
    """
    ell = np.asarray(w, float) * np.asarray(lengths, float)
    h = np.asarray(h, float)
    beta = np.asarray(beta, float)
    L = math.sqrt(float(ell @ h @ ell))
    if L == 0:
        return 0.0, 0.0
    e = ell / L
    D = N * N - float(beta @ h @ beta)
    p = float(beta @ h @ e)
    if nu * nu <= D:
        raise EmptyLadderError(f"nu={nu} does not exceed the shell bottom sqrt({D:.17g})")
    c = (-p * (nu * nu - D) + nu * math.sqrt((nu * nu - D) * (p * p + D))) / (p * p + nu * nu)
    period = L / c
    proper_rate = math.sqrt(D - c * c - 2 * c * p)  # d(affine)/dt
    return period, period * proper_rate


def period_set_closed_form(surface_or_metric, nu: float, max_winding: int = 3) -> PeriodSet:
    """Periods for product metrics and for constant coefficients on flat tori.

    Tori: every winding vector with entries in ``[-max_winding, max_winding]``.
    Spheres: every orbit is periodic with length ``2 pi r``; the base period
    and its multiples up to ``max_winding`` are listed and ``periodic_flow`` is set.
    """
    if isinstance(surface_or_metric, StandardStationaryMetric):
        metric = surface_or_metric
        if not metric.is_constant:
            raise ValidationError("closed-form periods need constant coefficients")
    else:
        metric = StandardStationaryMetric.product(surface_or_metric)
    if max_winding < 0:
        raise ValidationError("max_winding must be nonnegative")
    surf = metric.surface
    nu = float(nu)
    if isinstance(surf, RoundSphere):
        if nu <= 1:
            raise EmptyLadderError(f"nu={nu} <= 1: the product ladder is empty or critical")
        base = 2 * math.pi * surf.radius * nu / math.sqrt(nu * nu - 1)
        hol = base / nu
        ents = [PeriodEntry(k * base, f"k={k}", k * hol) for k in range(1, max_winding + 1)]
        return PeriodSet(nu, _signed(ents), "closed-form", True, {"base_period": base}).check()
    if not isinstance(surf, FlatTorus):
        raise ValidationError("unsupported surface")
    origin = np.zeros(metric.dim)
    N = float(metric.lapse_at(origin))
    beta = metric.shift_at(origin)
    D = N * N - float(beta @ metric.h_matrix @ beta)
    if nu * nu <= D * (1 + 1e-12):
        raise EmptyLadderError(f"nu={nu} does not exceed the shell bottom sqrt({D:.17g})")
    ents = []
    rng = range(-max_winding, max_winding + 1)
    for w in itertools.product(rng, repeat=metric.dim):
        if not any(w):
            continue
        per, hol = constant_torus_period(N, beta, metric.h_matrix, surf.lengths, w, nu)
        ents.append(PeriodEntry(per, _winding_label(w), hol))
    # w and -w are distinct orbits when beta != 0; negative entries are the backward flow
    out = _signed(ents)
    return PeriodSet(nu, out, "closed-form", False, {"max_winding": max_winding}).check()


def period_set_within(metric: StandardStationaryMetric, nu: float, bound: float, max_shells: int = 1000) -> PeriodSet:
    """Closed-form period set restricted to ``|s'| <= bound``.

    Winding shells ``max|w| = K`` are added until a whole shell lies beyond
    ``bound``.
    """
    if bound < 0:
        raise ValidationError("bound must be nonnegative")
    K = 1
    prev = None
    while K <= max_shells:
        ps = period_set_closed_form(metric, nu, K)
        if isinstance(metric.surface, RoundSphere):
            if ps.entries[-1].period > bound:
                break
        else:
            shell = [e.period for e in ps.entries if e.period > 0 and e.descriptor.startswith("w=") and _shell(e.descriptor) == K]
            if min(shell) > bound:
                break
        prev = ps
        K += 1
    ps = prev if prev is not None else period_set_closed_form(metric, nu, 0)
    keep = [e for e in ps.entries if abs(e.period) <= bound * (1 + 1e-12)]
    return PeriodSet(ps.nu, keep, ps.method, ps.periodic_flow, {**ps.meta, "bound": bound}).check()


def _shell(label: str) -> int:
    return max(abs(int(v)) for v in label[3:-1].split(","))


def _rhs_ivp(metric):
    def rhs(_, y):
        return vector_field(metric, y[None, :])[0]

    return rhs


def _shoot(metric, nu, x0, v, T, ell, rtol):
    st = state_on_level(metric, x0, v, nu)
    y0 = st.as_vector()
    sol = solve_ivp(_rhs_ivp(metric), (0.0, T), y0, method="DOP853", rtol=rtol, atol=rtol)
    if sol.status != 0:
        raise StiffnessError(sol.message)
    y1 = sol.y[:, -1]
    d = metric.dim
    res = np.concatenate([y1[:d] - y0[:d] - ell, y1[d : 2 * d] - y0[d : 2 * d]])
    return res, y0, y1


def period_set_numeric(
    metric: StandardStationaryMetric,
    nu: float,
    search_budget: int = 8,
    max_winding: int = 1,
    windings=None,
    orbit_tol: float = ORBIT_TOL,
    seed: int = 0,
    rtol: float = 1e-12,
) -> PeriodSet:
    """Shooting search for periodic orbits on the level ``tau = nu``.

    For each winding vector (entries in ``[-max_winding, max_winding]``) and
    each of ``search_budget`` seeds, a starting point, a direction and an
    affine return time are adjusted by least squares until the orbit closes
    up to the lattice translation. Orbits whose residual is below
    ``orbit_tol`` are kept. There is no completeness claim; a budget of 0
    returns an empty set. ``windings`` replaces the default box of winding
    vectors. Windings are labelled by the lattice displacement per increasing
    coordinate time; on the future sheet ``t`` decreases along the affine
    flow, so the affine displacement is ``-ell``.
    """
    if not metric.is_torus:
        raise ValidationError("numeric period search is implemented on tori only")
    if search_budget < 0:
        raise ValidationError("search budget must be nonnegative")
    nu = float(nu)
    if search_budget == 0:
        return PeriodSet(nu, [], "numeric", False, {"search_budget": 0})
    lo, hi = metric.field_extent()
    if nu * nu <= lo:
        raise EmptyLadderError(f"nu={nu} lies below the shell bottom everywhere")
    d = metric.dim
    L = np.asarray(metric.surface.lengths, float)
    rng = np.random.default_rng(seed)
    found: list[PeriodEntry] = []
    tries = 0
    if windings is None:
        windings = [w for w in itertools.product(range(-max_winding, max_winding + 1), repeat=d) if any(w)]
    for w in windings:
        w = tuple(int(k) for k in w)
        if not any(w):
            continue
        ell = -np.asarray(w, float) * L
        for _ in range(search_budget):
            tries += 1
            x0 = rng.uniform(0, 1, d) * L
            v0 = ell / np.linalg.norm(ell)
            try:
                st = state_on_level(metric, x0, v0 @ metric.h_matrix, nu)
            except DomainError:
                continue
            speed = np.linalg.norm(vector_field(metric, st.as_vector()[None, :])[0, :d])
            T0 = float(np.linalg.norm(ell) / speed)

            def fun(z):
                try:
                    return _shoot(metric, nu, z[:d], z[d : 2 * d], z[-1], ell, rtol)[0]
                except (DomainError, StiffnessError):
                    return np.full(2 * d, 1e3)

            z0 = np.concatenate([x0, v0 @ metric.h_matrix, [T0]])
            sol = least_squares(fun, z0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
            try:
                res, y0, y1 = _shoot(metric, nu, sol.x[:d], sol.x[d : 2 * d], sol.x[-1], ell, rtol)
            except (DomainError, StiffnessError):
                continue
            if np.linalg.norm(res) < orbit_tol and sol.x[-1] > 0:
                period = abs(y1[2 * d] - y0[2 * d])
                if not any(abs(e.period - period) <= 1e-7 * period and e.descriptor == _winding_label(w) for e in found):
                    found.append(PeriodEntry(period, _winding_label(w), float(sol.x[-1])))
    meta = {"search_budget": search_budget, "tries": tries, "orbit_tol": orbit_tol, "windings": [list(w) for w in windings]}
    if not found:
        return PeriodSet(nu, [], "numeric", False, meta)
    return PeriodSet(nu, _signed(found), "numeric", False, meta).check()


__all__ = [
    "FUTURE",
    "PAST",
    "PhaseState",
    "PeriodEntry",
    "PeriodSet",
    "Trajectory",
    "constant_torus_period",
    "flow",
    "hamiltonian",
    "lorentz_diagnostics",
    "lorentz_factor",
    "mass_shell_tau",
    "period_set_closed_form",
    "period_set_numeric",
    "period_set_within",
    "shell_residual",
    "spatial_speed",
    "state_on_level",
    "vector_field",
]
