"""Ladder counting functions, generating functions and Weyl-coefficient fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import AccuracyError, FitError, IncompletenessError, PreconditionError, ValidationError
from .spectra import JointSpectrum, SpectrumSlice
from .testfunctions import TestFunction

PASS = "PASS"
FAIL = "FAIL"
INCONCLUSIVE_CLUSTERING = "INCONCLUSIVE-CLUSTERING"


def _check_mass(m) -> None:
    if m < 1:
        raise ValidationError("counting needs m >= 1")


def _window_values(sl: SpectrumSlice, lo: float, hi: float, positive_only: bool, include_zero_modes: bool):
    lam, mult = sl.values(include_zero_modes)
    if positive_only:
        lo = max(lo, np.nextafter(0.0, 1.0))
    i = np.searchsorted(lam, lo, side="left")
    j = np.searchsorted(lam, hi, side="right")
    return lam[i:j], mult[i:j]


def count_sharp(
    spec: JointSpectrum,
    nu: float,
    C: float,
    m,
    both_branches: bool = False,
    include_zero_modes: bool = False,
) -> int:
    """Number of eigenvalues (with multiplicity) in ``[nu m - C, nu m + C]``.

    Only the positive branch is counted unless ``both_branches``, in which case
    ``|lambda|`` is tested against the window.
    """
    _check_mass(m)
    if C < 0:
        raise ValidationError("window half-width C must be nonnegative")
    sl = spec.slice(m)
    lo, hi = nu * m - C, nu * m + C
    if hi < 0:
        return 0
    sl.require(max(lo, 0.0), hi)
    if include_zero_modes and sl.zero_modes and lo <= 0 <= hi:
        extra = sl.zero_modes
    else:
        extra = 0
    n = sl.count_in(lo, hi, positive_only=True)
    if both_branches:
        n += sl.count_in(-hi, -max(lo, np.nextafter(0.0, 1.0)), positive_only=False)
    return n + extra


@dataclass
class SmoothedCount:
    value: float
    tail_bound: float
    terms: int


def count_smoothed(
    spec: JointSpectrum,
    nu: float,
    psi: TestFunction,
    m,
    accuracy: float | None = None,
    positive_only: bool = False,
    include_zero_modes: bool = False,
) -> SmoothedCount:
    """``sum_j psi(lambda_j(m) - nu m)`` with an estimate of the neglected tail.

    Eigenvalues farther than the effective radius ``X`` of ``psi`` are skipped;
    their contribution is bounded by ``density * 2 int_X^inf |psi|`` with the
    density measured inside the window.
    """
    _check_mass(m)
    sl = spec.slice(m)
    X = psi.effective_radius
    c = nu * m
    lo, hi = c - X, c + X
    if positive_only:
        sl.require(max(lo, 0.0), hi)
    else:
        sl.require(lo, hi)
    lam, mult = _window_values(sl, lo, hi, positive_only, include_zero_modes)
    value = psi.weighted_sum(lam - c, mult.astype(float)) if lam.size else 0.0
    density = float(mult.sum()) / (2 * X) if lam.size else 0.0
    # include the sup of |psi| beyond X for the nearest excluded eigenvalues
    tail = density * 2 * psi.tail_integral + 2 * psi.tol * abs(psi.psi0)
    if accuracy is not None and tail > accuracy:
        raise AccuracyError(f"tail bound {tail:.3g} exceeds the requested accuracy {accuracy:.3g} at m={m}")
    return SmoothedCount(float(value), float(tail), int(lam.size))


# --------------------------------------------------------------------------
# generating functions


@dataclass
class UpsilonResult:
    s: np.ndarray
    values: np.ndarray
    eps: float
    nu: float
    m_max: int
    weights: np.ndarray = field(repr=False)
    m0_contribution: float = 0.0

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


def smoothed_weights(spec: JointSpectrum, nu: float, psi: TestFunction, m_values, include_zero_modes=False) -> np.ndarray:
    """``N_psi(m)`` for each ``m`` (both branches, ``m = 0`` allowed)."""
    X = psi.effective_radius
    out = np.zeros(len(m_values))
    for i, m in enumerate(m_values):
        if m not in spec:
            raise IncompletenessError(f"missing spectrum slice for m={m}")
        sl = spec.slice(m)
        c = nu * m
        sl.require(c - X, c + X)
        lam, mult = _window_values(sl, c - X, c + X, False, include_zero_modes)
        out[i] = psi.weighted_sum(lam - c, mult.astype(float)) if lam.size else 0.0
    return out


def upsilon1(spec, nu, psi, s_grid, m_max: int, eps: float, include_zero_modes=False) -> UpsilonResult:
    """Abel-regularized ``sum_{m=0}^{m_max} exp(-eps m) N_psi(m) exp(i m s)``.

    The ``m = 0`` term is included in ``values`` and also reported alone.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    s = np.asarray(s_grid, dtype=float)
    ms = list(range(0, int(m_max) + 1))
    w = smoothed_weights(spec, nu, psi, ms, include_zero_modes)
    damp = np.exp(-eps * np.arange(len(ms)))
    vals = kernels.phase_sum(np.arange(len(ms), dtype=float), w * damp, s)
    return UpsilonResult(s, vals, eps, nu, int(m_max), w, float(w[0]))


def upsilon2(spec, nu, psi, s_grid, m_max: int, eps: float, include_zero_modes=False) -> UpsilonResult:
    """``sum_m sum_j exp(-eps m) psi(lambda_j(m) - nu m) exp(i lambda_j(m) s)``."""
    if eps <= 0:
        raise ValidationError("eps must be positive")
    s = np.asarray(s_grid, dtype=float)
    X = psi.effective_radius
    freqs, weights, per_m = [], [], []
    for m in range(0, int(m_max) + 1):
        if m not in spec:
            raise IncompletenessError(f"missing spectrum slice for m={m}")
        sl = spec.slice(m)
        c = nu * m
        sl.require(c - X, c + X)
        lam, mult = _window_values(sl, c - X, c + X, False, include_zero_modes)
        wv = mult * psi(lam - c) * math.exp(-eps * m)
        freqs.append(lam)
        weights.append(wv)
        per_m.append(float(wv.sum()))
    f = np.concatenate(freqs) if freqs else np.zeros(0)
    w = np.concatenate(weights) if weights else np.zeros(0)
    vals = kernels.phase_sum(f, w, s)
    return UpsilonResult(s, vals, eps, nu, int(m_max), np.asarray(per_m), per_m[0] if per_m else 0.0)


def detect_peaks(s, values, threshold: float = 3.0) -> np.ndarray:
    """Periodic local maxima of ``|values|`` exceeding ``threshold`` times the median modulus."""
    mod = np.abs(np.asarray(values))
    med = float(np.median(mod))
    left = np.roll(mod, 1)
    right = np.roll(mod, -1)
    idx = np.flatnonzero((mod > left) & (mod >= right) & (mod > threshold * med))
    return np.asarray(s)[idx]


def _circ_dist(a, b, period=2 * math.pi):
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b) + period / 2, period) - period / 2)
    return d


def persistent_peaks(results: list[UpsilonResult], threshold: float = 3.0, track_cells: int = 4) -> np.ndarray:
    """Peaks present at every ``eps`` of a sweep, located at the smallest ``eps``.

    Peaks are tracked from the coarsest ``eps`` downward: a chain survives a
    level when that level has a peak within ``track_cells`` grid cells of the
    chain's previous position. Returns the final positions of surviving chains.
    """
    if not results:
        return np.zeros(0)
    ordered = sorted(results, key=lambda r: -r.eps)
    levels = [detect_peaks(r.s, r.values, threshold) for r in ordered]
    s = ordered[-1].s
    cell = float(s[1] - s[0]) if s.size > 1 else 2 * math.pi
    chains = list(levels[0])
    for lv in levels[1:]:
        nxt = []
        for p in chains:
            if lv.size:
                d = _circ_dist(lv, p)
                j = int(np.argmin(d))
                if d[j] <= track_cells * cell:
                    nxt.append(float(lv[j]))
        chains = nxt
    return np.unique(np.asarray(chains, dtype=float))


def singular_support_predict(
    periods, nu: float, hat_support_radius: float, grid_tol: float = 1e-9, holonomies=None
) -> list[float]:
    """``{nu s' mod 2 pi : |s'| <= a}``, sorted and deduplicated within ``grid_tol``.

    With ``holonomies`` (one per period, the fibre angle swept by the orbit)
    the points are ``nu s' - holonomy mod 2 pi`` instead.
    """
    two_pi = 2 * math.pi
    periods = list(periods)
    if holonomies is None:
        holonomies = [0.0] * len(periods)
    else:
        holonomies = list(holonomies)
        if len(holonomies) != len(periods):
            raise ValidationError("need one holonomy per period")
    vals = []
    for sp, hol in zip(periods, holonomies):
        if abs(sp) <= hat_support_radius * (1 + 1e-12):
            v = math.fmod(nu * sp - hol, two_pi)
            if v < 0:
                v += two_pi
            if two_pi - v <= grid_tol:
                v = 0.0
            vals.append(v)
    vals.sort()
    out: list[float] = []
    for v in vals:
        if not out or v - out[-1] > grid_tol:
            out.append(v)
    if len(out) > 1 and two_pi - out[-1] + out[0] <= grid_tol:
        out.pop()
    return out


# --------------------------------------------------------------------------
# Weyl fits


@dataclass
class FitResult:
    coef: float
    stderr: float
    coef2: float | None
    residual_norm: float
    residuals: np.ndarray
    m: np.ndarray
    counts: np.ndarray
    n: int
    predicted: float | None = None

    @property
    def relative_error(self) -> float | None:
        if self.predicted is None or self.predicted == 0:
            return None
        return abs(self.coef - self.predicted) / abs(self.predicted)

    def relative_residuals(self) -> np.ndarray:
        return self.residuals / self.m ** (self.n - 2)

    def residual_trend(self) -> float:
        """Slope of log |relative residual| (RMS per quarter of the m range) against log m."""
        r = np.abs(self.relative_residuals())
        parts = np.array_split(np.arange(self.m.size), min(4, self.m.size))
        xm = np.array([np.log(self.m[p]).mean() for p in parts if p.size])
        ym = np.array([np.sqrt(np.mean(r[p] ** 2)) for p in parts if p.size])
        if np.any(ym <= 0):
            return -math.inf
        return float(np.polyfit(xm, np.log(ym), 1)[0])


def fit_weyl(m_values, counts, n: int, predicted: float | None = None, two_term: bool = True) -> FitResult:
    """Weighted least squares of ``N(m) ~ a0 m^(n-2) (+ a1 m^(n-3))`` with residuals scaled by ``m^-(n-2)``."""
    m = np.asarray(m_values, dtype=float)
    y = np.asarray(counts, dtype=float)
    if m.shape != y.shape:
        raise ValidationError("m values and counts differ in length")
    if n < 3:
        raise FitError("n < 3 leaves a constant leading regressor with no growth to fit")
    if np.unique(m).size < 5:
        raise FitError("need at least 5 distinct m values")
    if np.any(m <= 0):
        raise FitError("m values must be positive")
    cols = [m ** (n - 2)]
    if two_term:
        cols.append(m ** (n - 3))
    A = np.column_stack(cols)
    w = m ** (-(n - 2))
    Aw = A * w[:, None]
    yw = y * w
    if np.linalg.matrix_rank(Aw, tol=1e-10 * np.abs(Aw).max()) < A.shape[1]:
        raise FitError("degenerate design matrix (regressors are collinear for this n)")
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    res = y - A @ coef
    dof = max(1, m.size - A.shape[1])
    s2 = float(np.sum((res * w) ** 2)) / dof
    cov = s2 * np.linalg.inv(Aw.T @ Aw)
    return FitResult(
        float(coef[0]),
        float(math.sqrt(max(cov[0, 0], 0.0))),
        float(coef[1]) if two_term else None,
        float(np.linalg.norm(res * w)),
        res,
        m,
        y,
        n,
        predicted,
    )


@dataclass
class ClusteringDiagnostic:
    gap_cv: float
    mean_gap: float
    per_m_cv: list
    clustered: bool


def clustering_diagnostic(spec: JointSpectrum, nu: float, m_values, width: float = 3.0, cv_threshold: float = 0.1):
    """Coefficient of variation of gaps between distinct positive eigenvalues near ``nu m``.

    Gaps that repeat with a constant step (CV below ``cv_threshold``) indicate
    that the ladder clusters along an arithmetic progression.
    """
    cvs, means = [], []
    for m in m_values:
        sl = spec.slice(m)
        c = nu * m
        w = min(width, c - sl.complete_lo, sl.complete_hi - c)
        if w <= 0:
            continue
        lo, hi = c - w, c + w
        lam, _ = _window_values(sl, lo, hi, True, False)
        g = np.diff(np.unique(lam))
        if g.size >= 2:
            cvs.append(float(g.std() / g.mean()))
            means.append(float(g.mean()))
    if not cvs:
        return ClusteringDiagnostic(math.nan, math.nan, [], False)
    cv = float(np.median(cvs))
    return ClusteringDiagnostic(cv, float(np.median(means)), cvs, cv < cv_threshold)


@dataclass
class LadderReport:
    nu: float
    window: dict
    m: list
    counts: list
    predictions: list
    fit: FitResult
    predicted_coef: float
    tolerance: float
    verdict: str
    clustering: ClusteringDiagnostic | None = None
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "nu": self.nu,
            "window": self.window,
            "m": list(self.m),
            "counts": list(self.counts),
            "predictions": list(self.predictions),
            "fitted_coefficient": self.fit.coef,
            "fitted_stderr": self.fit.stderr,
            "fitted_subleading": self.fit.coef2,
            "residual_norm": self.fit.residual_norm,
            "residual_trend": self.fit.residual_trend(),
            "predicted_coefficient": self.predicted_coef,
            "relative_error": self.fit.relative_error,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "tolerances": self.tolerances,
        }
        if self.clustering is not None:
            out["clustering"] = {
                "gap_cv": self.clustering.gap_cv,
                "mean_gap": self.clustering.mean_gap,
                "clustered": self.clustering.clustered,
            }
        return out


def ladder_report(
    spec: JointSpectrum,
    nu: float,
    m_values,
    n: int,
    predicted_coef: float,
    C: float | None = None,
    psi: TestFunction | None = None,
    tolerance: float = 0.05,
    both_branches: bool = False,
    cluster_cv: float = 0.1,
) -> LadderReport:
    """Counts over ``m_values``, a Weyl fit against ``predicted_coef`` and a verdict.

    The verdict is ``INCONCLUSIVE-CLUSTERING`` when the eigenvalues near the
    ladder form an arithmetic progression, else PASS/FAIL on the relative error.
    """
    if (C is None) == (psi is None):
        raise ValidationError("give exactly one of C (sharp) or psi (smoothed)")
    ms = list(m_values)
    if C is not None:
        counts = [count_sharp(spec, nu, C, m, both_branches) for m in ms]
        window = {"mode": "sharp", "C": C}
    else:
        counts = [count_smoothed(spec, nu, psi, m, positive_only=not both_branches).value for m in ms]
        window = {"mode": "smoothed", **psi.describe()}
    fit = fit_weyl(ms, counts, n, predicted_coef)
    clus = clustering_diagnostic(spec, nu, ms, cv_threshold=cluster_cv)
    if clus.clustered:
        verdict = INCONCLUSIVE_CLUSTERING
    else:
        verdict = PASS if fit.relative_error is not None and fit.relative_error < tolerance else FAIL
    preds = [predicted_coef * float(m) ** (n - 2) for m in ms]
    tols = {"fit_tolerance": tolerance, "cluster_cv_threshold": cluster_cv}
    return LadderReport(nu, window, ms, counts, preds, fit, predicted_coef, tolerance, verdict, clus, tols)


# --------------------------------------------------------------------------
# Tauberian sandwich


@dataclass
class SandwichResult:
    lower: float
    value: float
    upper: float
    count_minus: int
    count_plus: int
    miss_probability: float

    @property
    def holds(self) -> bool:
        return self.lower <= self.value <= self.upper


def tauberian_sandwich(spec, nu, C, gamma, delta, m, psi: TestFunction) -> SandwichResult:
    """Evaluate ``sum_j chi_{C,delta}(lambda_j - nu m)`` with rigorous bracketing values.

    ``chi`` is the mollified indicator ``psi_delta * 1_[-C, C]``. With ``psi >= 0`` of
    unit mass, ``chi >= 1 - P(|Y| > gamma)`` on ``[-(C - gamma), C - gamma]`` and
    ``chi(x) <= P(|Y| > |x| - C)`` beyond ``C``, where ``Y ~ psi_delta``.
    """
    if not psi.nonneg:
        raise PreconditionError("the sandwich needs psi >= 0 with nonnegative transform (autocorrelation profile)")
    if not (0 < gamma < C) or delta <= 0:
        raise ValidationError("need 0 < gamma < C and delta > 0")
    _check_mass(m)
    pd = psi.scaled(delta / psi.delta)
    X = pd.effective_radius
    c = nu * m
    sl = spec.slice(m)
    lo, hi = c - C - X, c + C + X
    sl.require(max(lo, 0.0), hi)
    lam, mult = _window_values(sl, lo, hi, True, False)
    x = lam - c
    chi = np.clip(pd.chi(x, C), 0.0, 1.0)
    value = float(np.sum(mult * chi))
    p_gamma = float(pd.tail_probability(gamma))
    n_minus = count_sharp(spec, nu, C - gamma, m)
    n_plus = count_sharp(spec, nu, C + gamma, m)
    lower = n_minus * (1 - p_gamma)
    outside = np.abs(x) > C + gamma
    extra = float(np.sum(mult[outside] * pd.tail_probability(np.abs(x[outside]) - C))) if outside.any() else 0.0
    density = float(mult.sum()) / (2 * (C + X))
    upper = n_plus + extra + density * 2 * pd.tail_integral
    return SandwichResult(lower, value, upper, n_minus, n_plus, p_gamma)
