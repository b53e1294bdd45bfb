"""
Solution-dependent similarity transforms evaluated on norm series.

Each family rescales amplitude by E(t) = exp(+-a I(t)) and space by
L(t) = exp(+-b I(t)), where I(t) is the time integral of a driving norm A and
the new time is s(t) = int_0^t exp(+-gamma I).  Under the dilation y = L x and
V = v / E, any homogeneous norm transfers exactly:

    ||D^m V(s)||_{L^q} = E^{-1} L^{d/q - m} ||D^m v(t)||_{L^q}.

The rates (a, b) are tied to gamma so that the driving norm of the new field
is A exp(-+gamma I); consequently int A_v dt = int A_V ds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quadrature import cumulative_integral
from .solvers import NormSeries, dk_column, lp_column, parse_exponent

FAMILIES = ("NS-Hk", "NS-Lp", "QG-Wkp", "QG-Besov")

_COLUMN = re.compile(r"^(?:lp_(?P<q>[^_]+)|dkl_(?P<m>\d+)_(?P<qq>[^_]+))$")


def _sign_value(sign) -> int:
    if sign in ("+", 1, "plus"):
        return 1
    if sign in ("-", -1, "minus"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


@dataclass(frozen=True)
class TransformParams:
    family: str
    sign: str = "+"
    gamma: float = 1.0
    k: int = 3
    p: float = 2.0
    lam: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        object.__setattr__(self, "sign", "+" if _sign_value(self.sign) > 0 else "-")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.family == "NS-Hk" and self.k < 3:
            raise ValueError(f"NS-Hk needs k >= 3, got k={self.k}")
        if self.family == "NS-Lp" and not 3 < self.p < math.inf:
            raise ValueError(f"NS-Lp needs p in (3, inf), got p={self.p}")
        if self.family == "QG-Wkp" and not self.k > 2 / self.p + 1:
            raise ValueError(f"QG-Wkp needs k > 2/p + 1 = {2 / self.p + 1:g}, got k={self.k}")
        if self.family == "QG-Besov" and not self.lam > -1:
            raise ValueError(f"QG-Besov needs lambda > -1, got {self.lam}")

    @property
    def sign_value(self) -> int:
        return _sign_value(self.sign)

    @property
    def dims(self) -> int:
        return 3 if self.family.startswith("NS") else 2

    @property
    def rates(self) -> tuple[float, float]:
        """(a, b): amplitude and argument rates per unit of I(t)."""
        g, p, lam = self.gamma, self.p, self.lam
        if self.family == "NS-Hk":
            return 3 * g / 5, 2 * g / 5
        if self.family == "NS-Lp":
            return g / 2, g / 2
        if self.family == "QG-Wkp":
            return 2 * g / (p + 2), p * g / (p + 2)
        return g * lam / (lam + 1), g / (lam + 1)

    @property
    def driving_column(self) -> str:
        if self.family == "NS-Hk":
            return dk_column(self.k, 2.0)
        if self.family == "NS-Lp":
            return lp_column(self.p)
        if self.family == "QG-Wkp":
            return dk_column(self.k, self.p)
        return "besov_b0inf1"

    @property
    def driving_exponent(self) -> float:
        if self.family == "NS-Hk":
            return 5 / (2 * self.k)
        if self.family == "NS-Lp":
            return 2 * self.p / (self.p - 3)
        if self.family == "QG-Wkp":
            return (self.p + 2) / (self.k * self.p)
        return 1.0

    @property
    def invariant_exponent(self) -> float | None:
        """q with E^{-1} L^{d/q} = 1, i.e. the scale-invariant L^q; None if there is none."""
        a, b = self.rates
        if a == 0:
            return math.inf
        q = self.dims * b / a
        return q if q > 0 else None

    def column_scaling(self, name: str) -> tuple[int, float] | None:
        """(m, q) of a norm column, or None for non-norm columns."""
        if name == "l2":
            return 0, 2.0
        if name in ("grad_linf", "besov_b0inf1", "vorticity_linf"):
            return 1, math.inf
        m = _COLUMN.match(name)
        if not m:
            return None
        if m.group("q") is not None:
            return 0, parse_exponent(m.group("q"))
        return int(m.group("m")), parse_exponent(m.group("qq"))

    def transfer_exponent(self, m: int, q: float) -> float:
        """c with ||D^m V||_q / ||D^m v||_q = exp(sign * c * I)."""
        a, b = self.rates
        dq = 0.0 if math.isinf(q) else self.dims / q
        return -a + b * (dq - m)


def _series_column(series: NormSeries, name: str) -> np.ndarray:
    if name == "lp_2" and "lp_2" not in series:
        name = "l2"
    return series[name]


def driving_norm(series: NormSeries, params: TransformParams) -> np.ndarray:
    """A(t) = (family norm)^(family exponent) per sample."""
    return _series_column(series, params.driving_column) ** params.driving_exponent


def s_of_t(t: np.ndarray, A: np.ndarray, gamma: float, sign="+", method: str = "spline") -> tuple[np.ndarray, np.ndarray]:
    """Return (s, I) with I = int_0^t A and s = int_0^t exp(+-gamma I)."""
    A = np.asarray(A, dtype=float)
    if np.any(~np.isfinite(A)) or np.any(A < 0):
        raise ValueError("driving norm must be finite and nonnegative")
    I = cumulative_integral(t, A, method)
    s = cumulative_integral(t, np.exp(_sign_value(sign) * gamma * I), method)
    return s, I


@dataclass
class TransformedSeries:
    t: np.ndarray
    s: np.ndarray
    E: np.ndarray
    L: np.ndarray
    columns: dict[str, np.ndarray]
    params: TransformParams
    I: np.ndarray = field(repr=False, default=None)

    @property
    def names(self) -> list[str]:
        return ["t", "s", "E", "L", *self.columns]

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.t, self.s, self.E, self.L, *self.columns.values()])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(self.names), comments="")


def norm_transfer(series: NormSeries, params: TransformParams, method: str = "spline") -> TransformedSeries:
    """Norms of the transformed field on the s grid, via exact dilation identities."""
    A = driving_norm(series, params)
    s, I = s_of_t(series.t, A, params.gamma, params.sign, method)
    sg = params.sign_value
    a, b = params.rates
    E = np.exp(sg * a * I)
    L = np.exp(sg * b * I)
    cols = {}
    for name, col in series.columns.items():
        mq = params.column_scaling(name)
        if mq is None:
            continue
        cols[name] = col * np.exp(sg * params.transfer_exponent(*mq) * I)
    return TransformedSeries(series.t.copy(), s, E, L, cols, params, I)


@dataclass
class InvariantReport:
    params: TransformParams
    invariant_q: float | None
    exponent: float | None  # transfer exponent of the invariant norm (0 in exact arithmetic)
    factor: np.ndarray | None  # per-sample transfer factor of the invariant norm
    lhs: np.ndarray  # int_0^t A_v dtau
    rhs: np.ndarray  # int_0^{s(t)} A_V dsigma
    rel_err: np.ndarray
    tol: float = 1e-6

    @property
    def factor_deviation(self) -> float:
        return 0.0 if self.factor is None else float(np.max(np.abs(self.factor - 1)))

    @property
    def max_rel_err(self) -> float:
        return float(np.max(self.rel_err))

    @property
    def ok(self) -> np.ndarray:
        return self.rel_err <= self.tol

    @property
    def passed(self) -> bool:
        return self.factor_deviation <= 1e-12 and bool(np.all(self.ok))

    def summary(self) -> str:
        q = "none" if self.invariant_q is None else f"L^{fmt_q(self.invariant_q)}"
        return (
            f"{self.params.family}{self.params.sign} gamma={self.params.gamma:g}: invariant norm {q}, "
            f"|factor-1| <= {self.factor_deviation:.2e}; integral invariant max rel err {self.max_rel_err:.2e}"
        )


def fmt_q(q: float) -> str:
    return "inf" if math.isinf(q) else f"{q:g}"


def invariant_report(series: NormSeries, params: TransformParams, method: str = "spline", tol: float = 1e-6) -> InvariantReport:
    """Check the scale-invariant norm and the integral invariant of one transform."""
    ts = norm_transfer(series, params, method)
    q = params.invariant_exponent
    exponent = factor = None
    if q is not None:
        exponent = params.transfer_exponent(0, q)
        factor = np.exp(params.sign_value * exponent * ts.I)
    A_v = driving_norm(series, params)
    transferred = A_v * np.exp(params.sign_value * params.driving_exponent * params.transfer_exponent(*_driving_scaling(params)) * ts.I)
    lhs = ts.I
    rhs = cumulative_integral(ts.s, transferred, method)
    scale = np.maximum(np.abs(lhs), np.finfo(float).tiny)
    rel = np.where(lhs == 0, np.abs(rhs), np.abs(lhs - rhs) / scale)
    return InvariantReport(params, q, exponent, factor, lhs, rhs, rel, tol)


def _driving_scaling(params: TransformParams) -> tuple[int, float]:
    if params.family == "NS-Hk":
        return params.k, 2.0
    if params.family == "NS-Lp":
        return 0, params.p
    if params.family == "QG-Wkp":
        return params.k, params.p
    return 1, math.inf
