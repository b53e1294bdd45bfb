"""
Evaluation of the nested-exponential a-priori bounds along norm series.

Every theorem family shares one shape.  With X the tracked norm, A the driving
norm, sigma the family exponent, gamma0 = C0 * F the hypothesis threshold and
B0 = X(0)^sigma,

    upper:  X(t) <= X0 exp[(gamma/sigma) I] / (1 + (gamma - gamma0) B0 J+)^{1/sigma}
    lower:  X(t) >= X0 exp[-(gamma/sigma) I] / (1 - (gamma - gamma0) B0 J-)^{1/sigma}

where I = int_0^t A and J+- = int_0^t exp(+-gamma I).  The bracket y(t) in the
denominator obeys the closed-form bounds

    upper:  y <= (1 - gamma0 B0 t)^{-(gamma/gamma0 - 1)}   (void once gamma0 B0 t >= 1)
    lower:  y >= (1 + gamma0 B0 t)^{-(gamma/gamma0 - 1)}.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .norms import CalibrationReport
from .quadrature import cumulative_integral
from .solvers import NormSeries, dk_column, lp_column

THEOREMS = ("1.1i", "1.1ii", "1.2", "1.3i", "1.3ii", "1.4upper", "1.4lower")
LOWER = frozenset({"1.1ii", "1.3ii", "1.4lower"})
WITH_DENOMINATOR_BOUND = frozenset({"1.1i", "1.1ii", "1.2", "1.3i", "1.3ii", "1.4lower"})
INVISCID_ONLY = frozenset({"1.1ii", "1.3ii", "1.4lower"})


class GammaBelowThreshold(ValueError):
    def __init__(self, gamma: float, threshold: float, formula: str):
        super().__init__(f"gamma = {gamma:g} is below the threshold {formula} = {threshold:.6g}")
        self.gamma = gamma
        self.threshold = threshold
        self.formula = formula


def direction(theorem: str) -> str:
    return "lower" if theorem in LOWER else "upper"


def system(theorem: str) -> str:
    return "ns" if theorem.startswith(("1.1", "1.2")) else "qg"


def sigma(theorem: str, k: int, p: float) -> float:
    """Exponent of the driving norm; also the reciprocal power of the denominator."""
    if theorem.startswith("1.1"):
        return 5 / (2 * k)
    if theorem == "1.2":
        return 2 * p / (p - 3)
    if theorem.startswith("1.3"):
        return (p + 2) / (k * p)
    return 1.0


def threshold_formula(theorem: str, k: int, p: float) -> str:
    if theorem.startswith("1.1"):
        return f"C0 * ||v0||_L2^(1 - 5/(2k)) with k={k}"
    if theorem.startswith("1.3"):
        return f"C0 * ||theta0||_Lp^(1 - (p+2)/(kp)) with k={k}, p={p:g}"
    return "C0"


@dataclass(frozen=True)
class EstimateParams:
    theorem: str
    gamma: float
    c0: float
    k: int = 3
    p: float = 2.0
    rtol: float = 5e-2
    direction: str | None = None

    def __post_init__(self):
        if self.theorem not in THEOREMS:
            raise ValueError(f"unknown theorem {self.theorem!r}; choose from {', '.join(THEOREMS)}")
        expected = direction(self.theorem)
        if self.direction is None:
            object.__setattr__(self, "direction", expected)
        elif self.direction != expected:
            raise ValueError(f"theorem {self.theorem} is a {expected} bound, got direction={self.direction!r}")
        if not self.c0 > 0:
            raise ValueError(f"C0 must be > 0, got {self.c0}")
        if not self.rtol >= 0:
            raise ValueError(f"rtol must be >= 0, got {self.rtol}")
        th, k, p = self.theorem, self.k, self.p
        if th.startswith("1.1") and (k < 3 or p != 2):
            raise ValueError(f"Theorem {th} needs k >= 3 and p = 2, got k={k}, p={p:g}")
        if th == "1.2" and not 3 < p < math.inf:
            raise ValueError(f"Theorem 1.2 needs p in (3, inf), got p={p:g}")
        if th.startswith("1.3") and not k > 2 / p + 1:
            raise ValueError(f"Theorem {th} needs k > 2/p + 1 = {2 / p + 1:g}, got k={k}")

    @property
    def sigma(self) -> float:
        return sigma(self.theorem, self.k, self.p)

    @property
    def tracked_column(self) -> str:
        th = self.theorem
        if th.startswith("1.1"):
            return dk_column(self.k, 2.0)
        if th == "1.2":
            return lp_column(self.p)
        if th.startswith("1.3"):
            return dk_column(self.k, self.p)
        return "grad_linf"

    @property
    def driving_column(self) -> str:
        return "besov_b0inf1" if self.theorem.startswith("1.4") else self.tracked_column

    @property
    def factor_column(self) -> str | None:
        if self.theorem.startswith("1.1"):
            return "l2"
        if self.theorem.startswith("1.3"):
            return "l2" if self.p == 2 else lp_column(self.p)
        return None

    def required_columns(self) -> list[str]:
        cols = [self.tracked_column, self.driving_column]
        if self.factor_column:
            cols.append(self.factor_column)
        return list(dict.fromkeys(cols))

    def initial_factor(self, series: NormSeries) -> float:
        """F with threshold gamma0 = C0 * F."""
        col = self.factor_column
        if col is None:
            return 1.0
        return float(series[col][0]) ** (1 - self.sigma)

    def threshold(self, series: NormSeries) -> float:
        return self.c0 * self.initial_factor(series)

    def describe(self) -> str:
        return f"Theorem {self.theorem} ({self.direction}) k={self.k} p={self.p:g} gamma={self.gamma:.6g} C0={self.c0:.6g}"


@dataclass
class Prepared:
    """Per-series quantities shared by every gamma (inner integral computed once)."""

    t: np.ndarray
    X: np.ndarray
    A: np.ndarray
    I: np.ndarray
    gamma0: float
    B0: float
    sigma: float
    lower: bool
    method: str


def prepare(series: NormSeries, params: EstimateParams, method: str = "spline") -> Prepared:
    for col in params.required_columns():
        series[col]  # raises KeyError naming the missing column
    th = params.theorem
    if th in INVISCID_ONLY:
        visc = series.meta.get("kappa" if system(th) == "qg" else "nu", 0.0)
        if visc:
            raise ValueError(f"Theorem {th} is stated for the inviscid system; series has viscosity {visc:g}")
    sig = params.sigma
    X = series[params.tracked_column]
    A = series[params.driving_column]
    if params.driving_column == params.tracked_column:
        A = A**sig
    I = cumulative_integral(series.t, A, method)
    return Prepared(series.t, X, A, I, params.threshold(series), float(X[0]) ** sig, sig, params.theorem in LOWER, method)


def _require_admissible(params: EstimateParams, gamma0: float) -> None:
    if params.gamma < gamma0 * (1 - 1e-12):
        raise GammaBelowThreshold(params.gamma, gamma0, threshold_formula(params.theorem, params.k, params.p))


def _bracket(prep: Prepared, gamma: float) -> np.ndarray:
    """y(t) = 1 +- (gamma - gamma0) B0 J+-."""
    sg = -1.0 if prep.lower else 1.0
    J = cumulative_integral(prep.t, np.exp(sg * gamma * prep.I), prep.method)
    return 1.0 + sg * (gamma - prep.gamma0) * prep.B0 * J


def _main_rhs(prep: Prepared, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """(rhs, void mask) of the main estimate; rhs is NaN where void."""
    y = _bracket(prep, gamma)
    X0 = float(prep.X[0])
    sg = -1.0 if prep.lower else 1.0
    void = np.zeros(y.shape, dtype=bool)
    if prep.lower:
        if np.any(np.diff(y) > 1e-12 * np.maximum(1.0, np.abs(y[1:]))):
            raise AssertionError("lower-bound bracket is not monotonically nonincreasing")
        hits = np.flatnonzero(y <= 0)
        if hits.size:
            void[hits[0] :] = True
    rhs = np.full(y.shape, np.nan)
    ok = ~void
    if X0 == 0:
        rhs[ok] = 0.0
    else:
        log_rhs = math.log(X0) + sg * (gamma / prep.sigma) * prep.I[ok] - np.log(y[ok]) / prep.sigma
        rhs[ok] = np.exp(log_rhs)
    rhs[0] = X0 if not void[0] else rhs[0]
    return rhs, void


@dataclass
class MarginSeries:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    ok: np.ndarray
    void: np.ndarray
    params: EstimateParams
    kind: str = "main"  # "main" or "denominator"
    threshold: float = float("nan")
    t_star: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.ok))

    @property
    def relative_margin(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.void, np.nan, self.margin / np.abs(self.rhs))

    @property
    def min_margin(self) -> float:
        live = self.margin[~self.void]
        return float(np.min(live)) if live.size else float("nan")

    @property
    def min_relative_margin(self) -> float:
        rel = self.relative_margin
        rel = rel[np.isfinite(rel)]
        return float(np.min(rel)) if rel.size else float("nan")

    @property
    def first_violation(self) -> float | None:
        bad = np.flatnonzero(~self.ok)
        return float(self.t[bad[0]]) if bad.size else None

    @property
    def first_void(self) -> float | None:
        v = np.flatnonzero(self.void)
        return float(self.t[v[0]]) if v.size else None

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.t, self.lhs, self.rhs, self.margin, self.ok.astype(int), self.void.astype(int)])
        fmt = ["%.17g"] * 4 + ["%d", "%d"]
        np.savetxt(path, data, fmt=fmt, delimiter=",", header="t,lhs,rhs,margin,ok,void", comments="")

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        label = "denominator" if self.kind == "denominator" else "estimate"
        parts = [
            f"[{status}] {self.params.describe()} {label}",
            f"threshold={self.threshold:.6g}",
            f"min margin={self.min_margin:.6g} (relative {self.min_relative_margin:.3g}, rtol {self.params.rtol:g})",
        ]
        if self.first_violation is not None:
            parts.append(f"first violation at t={self.first_violation:.6g}")
        if self.t_star is not None:
            parts.append(f"bound void from t*={self.t_star:.10g}")
        elif self.first_void is not None:
            parts.append(f"bound void from t={self.first_void:.6g}")
        return "; ".join(parts)


def _finish(t, lhs, rhs, void, params, kind, threshold, upper_sense, t_star=None) -> MarginSeries:
    margin = np.where(void, np.nan, (rhs - lhs) if upper_sense else (lhs - rhs))
    with np.errstate(invalid="ignore"):
        ok = void | (margin >= -params.rtol * np.abs(rhs))
    return MarginSeries(t.copy(), np.asarray(lhs, float), rhs, margin, ok, void, params, kind, threshold, t_star)


def check_main(series: NormSeries, params: EstimateParams, method: str = "spline") -> MarginSeries:
    """Tracked norm against the nested-exponential bound at every sample."""
    prep = prepare(series, params, method)
    _require_admissible(params, prep.gamma0)
    rhs, void = _main_rhs(prep, params.gamma)
    return _finish(prep.t, prep.X, rhs, void, params, "main", prep.gamma0, not prep.lower)


def denominator_bound(t: np.ndarray, gamma: float, gamma0: float, B0: float, lower: bool) -> tuple[np.ndarray, np.ndarray, float | None]:
    """Closed-form bound on y(t), its void mask and the voiding time (upper family only)."""
    t = np.asarray(t, dtype=float)
    expo = -(gamma / gamma0 - 1.0)
    rate = gamma0 * B0
    if expo == 0.0:
        # at the threshold the bound is identically 1 and never voids
        return np.ones(t.shape), np.zeros(t.shape, dtype=bool), None
    if lower:
        return (1.0 + rate * t) ** expo, np.zeros(t.shape, dtype=bool), None
    base = 1.0 - rate * t
    void = base <= 0
    bound = np.full(t.shape, np.nan)
    bound[~void] = base[~void] ** expo
    t_star = 1.0 / rate if rate > 0 else None
    return bound, void, t_star


def check_denominator(series: NormSeries, params: EstimateParams, method: str = "spline") -> MarginSeries:
    """Bracket y(t) against its closed-form estimate while that estimate is defined."""
    if params.theorem not in WITH_DENOMINATOR_BOUND:
        raise ValueError(f"Theorem {params.theorem} has no denominator estimate")
    prep = prepare(series, params, method)
    _require_admissible(params, prep.gamma0)
    y = _bracket(prep, params.gamma)
    bound, void, t_star = denominator_bound(prep.t, params.gamma, prep.gamma0, prep.B0, prep.lower)
    if prep.lower:
        void = y <= 0
        if void.any():
            void[np.flatnonzero(void)[0] :] = True
    rhs = np.where(void, np.nan, bound)
    return _finish(prep.t, y, rhs, void, params, "denominator", prep.gamma0, not prep.lower, t_star)


def main_rhs_closed_form_constant(t, X0: float, gamma: float, gamma0: float, sig: float, lower: bool) -> np.ndarray:
    """Main-estimate rhs for a series with X constant (= X0) and A = X0^sigma."""
    t = np.asarray(t, dtype=float)
    B0 = X0**sig
    if lower:
        J = -np.expm1(-gamma * B0 * t) / (gamma * B0)
        y = 1.0 - (gamma - gamma0) * B0 * J
        with np.errstate(invalid="ignore"):
            return np.where(y > 0, X0 * np.exp(-gamma * B0 * t / sig) / np.abs(y) ** (1 / sig), np.nan)
    J = np.expm1(gamma * B0 * t) / (gamma * B0)
    y = 1.0 + (gamma - gamma0) * B0 * J
    return X0 * np.exp(gamma * B0 * t / sig) / y ** (1 / sig)


def bracket_closed_form_constant(t, X0: float, gamma: float, gamma0: float, sig: float, lower: bool) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    B0 = X0**sig
    if lower:
        return 1.0 + (gamma - gamma0) / gamma * np.expm1(-gamma * B0 * t)
    return 1.0 + (gamma - gamma0) / gamma * np.expm1(gamma * B0 * t)


# --- comparison ODE ---------------------------------------------------------


@dataclass
class ODEComparison:
    s: np.ndarray
    closed: np.ndarray
    numeric: np.ndarray
    blowup: bool
    s_blowup: float | None

    @property
    def max_rel_diff(self) -> float:
        scale = np.maximum(np.abs(self.closed), np.finfo(float).tiny)
        diff = np.abs(self.closed - self.numeric)
        return float(np.max(np.where(self.closed == 0, diff, diff / scale)))


def ode_comparison(
    c: float, beta: float, x0: float, horizon: float, samples: int = 101, lower: bool = False, substeps: int = 20
) -> ODEComparison:
    """Solve dX/ds = -+c X^{1+beta} in closed form and with classical RK4.

    Closed form: X(s) = X0 / (1 +- c beta X0^beta s)^{1/beta}.  When the
    bracket reaches zero inside the horizon, samples stop short of that
    point and ``blowup`` is set.
    """
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    if x0 < 0:
        raise ValueError(f"X0 must be >= 0, got {x0}")
    sg = -1.0 if lower else 1.0
    rate = sg * c * beta * x0**beta
    s = np.linspace(0.0, horizon, samples)
    s_blow = None
    if rate < 0:
        s_blow = -1.0 / rate
        if s_blow <= horizon:
            s = s[s < s_blow]
    blowup = s_blow is not None and s_blow <= horizon
    closed = x0 / (1.0 + rate * s) ** (1.0 / beta)

    def f(x):
        return -sg * c * x ** (1.0 + beta)

    numeric = np.empty_like(s)
    numeric[0] = x = x0
    for i in range(1, s.size):
        h = (s[i] - s[i - 1]) / substeps
        for _ in range(substeps):
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        numeric[i] = x
    return ODEComparison(s, closed, numeric, blowup, s_blow)


# --- Gronwall reduction -------------------------------------------------------


def gronwall_oracle(
    series: NormSeries, k: int, C: float, p: float = 2.0, integrand: np.ndarray | None = None, method: str = "spline"
) -> np.ndarray:
    """||D^k u0||_p exp(C int_0^t g) with g = ||grad u||_inf unless ``integrand`` is given."""
    X = series[dk_column(k, p)]
    g = series["grad_linf"] if integrand is None else np.asarray(integrand, dtype=float)
    return X[0] * np.exp(C * cumulative_integral(series.t, g, method))


def compose_c0(c1: float, c2: float, dims: int, sig: float, riesz: float = 1.0) -> float:
    """C0 = sigma * (2 dims) * C1 * C2 * riesz.

    The commutator bound is applied per velocity component and derivative
    direction (2 dims terms after D^{k-1} d_j g <= D^k g), each closed by the
    interpolation inequality; ``riesz`` bounds the velocity multiplier on L^p
    (exactly 1 for p = 2, where Riesz transforms are contractions).
    """
    return sig * 2 * dims * c1 * c2 * riesz


def calibrated_c0(theorem: str, reports: dict[str, CalibrationReport], k: int = 3, p: float = 2.0, riesz: float = 1.0) -> float:
    """Default C0 from calibration reports keyed by kind."""
    if theorem.startswith("1.4"):
        return reports["C_CZ"].constant
    if theorem == "1.2":
        raise ValueError("Theorem 1.2 has no calibrated default for C0; supply c0 explicitly")
    dims = 3 if theorem.startswith("1.1") else 2
    for kind in ("C1", "C2"):
        rep = reports[kind]
        if rep.k != k or rep.p != p or rep.dims != dims:
            raise ValueError(
                f"{kind} report was calibrated for k={rep.k}, p={rep.p}, dims={rep.dims}; "
                f"Theorem {theorem} needs k={k}, p={p:g}, dims={dims}"
            )
    return compose_c0(reports["C1"].constant, reports["C2"].constant, dims, sigma(theorem, k, p), riesz)


# --- gamma sweep ---------------------------------------------------------------


@dataclass
class SweepTable:
    gammas: np.ndarray
    t: np.ndarray
    rhs: np.ndarray  # (len(gammas), len(t)); NaN where void
    tightest: np.ndarray  # per t: index into gammas, -1 if every bound is void
    threshold: float
    params: EstimateParams
    dropped: int = 0

    @property
    def tightest_gamma(self) -> np.ndarray:
        return np.where(self.tightest >= 0, self.gammas[np.maximum(self.tightest, 0)], np.nan)

    @property
    def improves(self) -> bool:
        """Whether some gamma beats the threshold value strictly at some t."""
        at = int(np.argmin(np.abs(self.gammas - self.threshold)))
        if not math.isclose(self.gammas[at], self.threshold, rel_tol=1e-12):
            return True
        base = self.rhs[at]
        with np.errstate(invalid="ignore"):
            better = self.rhs > base if self.params.direction == "lower" else self.rhs < base
        return bool(np.any(better & np.isfinite(base)))

    def to_csv(self, path: str | Path) -> None:
        G, T = np.meshgrid(self.gammas, self.t, indexing="ij")
        flag = np.zeros(self.rhs.shape, dtype=int)
        for j, i in enumerate(self.tightest):
            if i >= 0:
                flag[i, j] = 1
        data = np.column_stack([G.ravel(), T.ravel(), self.rhs.ravel(), flag.ravel()])
        np.savetxt(path, data, fmt=["%.17g", "%.17g", "%.17g", "%d"], delimiter=",", header="gamma,t,rhs,tightest_flag", comments="")


def gamma_sweep(series: NormSeries, theorem: str, gammas, c0: float, k: int = 3, p: float = 2.0, method: str = "spline") -> SweepTable:
    """Main-estimate rhs over a gamma grid; inadmissible gammas are dropped."""
    gammas = np.unique(np.asarray(gammas, dtype=float))
    params = EstimateParams(theorem, float(gammas.max()) if gammas.size else 1.0, c0, k, p)
    prep = prepare(series, params, method)
    keep = gammas >= prep.gamma0 * (1 - 1e-12)
    dropped = int(np.count_nonzero(~keep))
    gammas = gammas[keep]
    if gammas.size == 0:
        raise ValueError(f"no admissible gamma: every value is below the threshold {prep.gamma0:.6g}")
    if dropped:
        warnings.warn(f"dropped {dropped} gamma values below the threshold {prep.gamma0:.6g}", stacklevel=2)
    rhs = np.vstack([_main_rhs(prep, g)[0] for g in gammas])
    tightest = np.full(prep.t.size, -1)
    for j in range(prep.t.size):
        col = rhs[:, j]
        if np.any(np.isfinite(col)):
            tightest[j] = int(np.nanargmax(col) if prep.lower else np.nanargmin(col))
    return SweepTable(gammas, prep.t.copy(), rhs, tightest, prep.gamma0, params, dropped)
