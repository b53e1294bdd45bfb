"""
Norms and functional inequalities on the periodic box.

Integrals are grid quadratures (exact for resolved trigonometric polynomials),
derivatives are spectral, and L^inf quantities are grid maxima of the
pointwise Euclidean norm over components.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .spectral import (
    Grid,
    SpectralField,
    dealias,
    derivative_symbol,
    gradient,
    qg_velocity,
)


class DegenerateSample(ValueError):
    """A ratio whose denominator vanishes while its numerator does not."""


@lru_cache(maxsize=None)
def multi_indices(dims: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All alpha in N^dims with |alpha| = k, lexicographically descending."""
    out = []
    for cuts in itertools.combinations_with_replacement(range(dims), k):
        alpha = [0] * dims
        for c in cuts:
            alpha[c] += 1
        out.append(tuple(alpha))
    return tuple(sorted(set(out), reverse=True))


def _pointwise_abs(values: np.ndarray) -> np.ndarray:
    """Euclidean norm across the leading component axis."""
    if values.shape[0] == 1:
        return np.abs(values[0])
    return np.sqrt(np.sum(values**2, axis=0))


def _check_p(p: float) -> float:
    p = float(p)
    if not p >= 1:
        raise ValueError(f"exponent p must lie in [1, inf], got {p}")
    return p


def lp_of_values(grid: Grid, values: np.ndarray, p: float) -> float:
    """L^p norm of grid values with shape (c, n, ..., n)."""
    p = _check_p(p)
    mag = _pointwise_abs(values)
    if math.isinf(p):
        return float(np.max(mag))
    return float((np.sum(mag**p) * grid.cell_volume) ** (1.0 / p))


def lp_norm(f: SpectralField, p: float) -> float:
    """||f||_{L^p}; for p = inf the maximum over grid points."""
    return lp_of_values(f.grid, f.real(), p)


def sobolev_values(f: SpectralField, k: int) -> np.ndarray:
    """Stack of D^alpha f over |alpha| = k, shape (n_alpha * c, n, ..., n)."""
    g = f.grid
    alphas = multi_indices(g.dims, k)
    coeffs = np.concatenate([f.coeffs * derivative_symbol(g, a) for a in alphas])
    return g.ifft(coeffs)


def homogeneous_sobolev(f: SpectralField, k: int, p: float = 2.0) -> float:
    """(sum_{|alpha|=k} int |D^alpha f|^p dx)^{1/p}.

    For vector fields |D^alpha f| is the Euclidean norm over components.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    p = _check_p(p)
    if k == 0:
        return lp_norm(f, p)
    g = f.grid
    if p == 2:
        # Parseval on the Hermitian part of each derivative's coefficients
        total = 0.0
        for a in multi_indices(g.dims, k):
            d = f.coeffs * derivative_symbol(g, a)
            herm = 0.5 * (d + np.conj(g._negate(d, g.axes)))
            total += float(np.sum(np.abs(herm) ** 2))
        return math.sqrt(total * g.volume)
    vals = sobolev_values(f, k)
    c = f.components
    per_alpha = vals.reshape((-1, c) + g.shape)
    if math.isinf(p):
        return float(max(np.max(_pointwise_abs(v)) for v in per_alpha))
    total = sum(np.sum(_pointwise_abs(v) ** p) for v in per_alpha) * g.cell_volume
    return float(total ** (1.0 / p))


def grad_linf(f: SpectralField) -> float:
    """max_x |grad f(x)| (Frobenius norm of the Jacobian for vector fields)."""
    return float(np.max(_pointwise_abs(gradient(f).real())))


# --- Littlewood-Paley partition ------------------------------------------


def _bump_step(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_cutoff(r: np.ndarray) -> np.ndarray:
    """C^inf radial cutoff: 1 on [0, 1], 0 on [2, inf), monotone in between."""
    r = np.asarray(r, dtype=float)
    a = _bump_step(2.0 - r)
    b = _bump_step(r - 1.0)
    return a / (a + b)


def dyadic_profile(r: np.ndarray) -> np.ndarray:
    """phi_hat(r) = psi(r) - psi(2r): supported on [1/2, 2], positive on (1/2, 2)."""
    return smooth_cutoff(r) - smooth_cutoff(2.0 * np.asarray(r, dtype=float))


@dataclass(frozen=True, eq=False)
class BesovPartition:
    """Dyadic shells phi_j(xi) = phi_hat(2^-j |xi|) for j_min <= j <= j_max.

    The shells telescope: their sum is exactly 1 on 2^j_min <= |xi| <= 2^j_max.
    """

    grid: Grid
    j_min: int = 0
    j_max: int | None = None

    def __post_init__(self):
        if self.j_max is None:
            top = float(np.max(self.grid.kabs))
            object.__setattr__(self, "j_max", int(math.ceil(math.log2(top))))
        if self.j_max < self.j_min:
            raise ValueError("empty shell range")

    @property
    def shells(self) -> range:
        return range(self.j_min, self.j_max + 1)

    @property
    def overlap_width(self) -> float:
        """Each shell overlaps its neighbours on a ratio-2 band of |xi|."""
        return 2.0

    @property
    def covered_range(self) -> tuple[float, float]:
        return 2.0**self.j_min, 2.0**self.j_max

    @cached_property
    def profiles(self) -> np.ndarray:
        kabs = self.grid.kabs
        return np.stack([dyadic_profile(kabs * 2.0**-j) for j in self.shells])

    def partition_residual(self) -> float:
        """max |sum_j phi_j - 1| over covered nonzero wavevectors."""
        lo, hi = self.covered_range
        kabs = self.grid.kabs
        covered = (kabs >= lo) & (kabs <= hi)
        return float(np.max(np.abs(self.profiles.sum(axis=0) - 1.0)[covered]))

    def blocks(self, f: SpectralField) -> list[np.ndarray]:
        """Real-space Littlewood-Paley blocks phi_j * f (mean discarded)."""
        _check_coverage(f, self)
        out = []
        for prof in self.profiles:
            out.append(f.grid.ifft(f.coeffs * prof))
        return out


def _check_coverage(f: SpectralField, part: BesovPartition) -> None:
    g = f.grid
    scale = float(np.max(np.abs(f.coeffs), initial=0.0))
    if scale == 0.0:
        return
    active = np.any(np.abs(f.coeffs) > 1e-14 * scale, axis=0) & (g.k2 > 0)
    lo, hi = part.covered_range
    bad = active & ((g.kabs < lo) | (g.kabs > hi))
    if np.any(bad):
        worst = float(np.max(g.kabs[bad])) if np.any(g.kabs[bad] > hi) else float(np.min(g.kabs[bad]))
        raise ValueError(
            f"Besov shells j={part.j_min}..{part.j_max} cover {lo:g} <= |xi| <= {hi:g}; "
            f"active mode at |xi| = {worst:.6g} is uncovered"
        )


def besov_b0inf1(f: SpectralField, partition: BesovPartition | None = None) -> float:
    """sum_j ||phi_j * f||_{L^inf}, homogeneous (mean mode discarded)."""
    part = partition or BesovPartition(f.grid)
    f0 = f.remove_mean()
    _check_coverage(f0, part)
    total = 0.0
    for prof in part.profiles:
        c = f0.coeffs * prof
        if not np.any(c):
            continue
        total += float(np.max(_pointwise_abs(f.grid.ifft(c))))
    return total


# --- inequality ratios ----------------------------------------------------


def _require_supercritical(k: int, p: float, dims: int, what: str) -> None:
    if not k > dims / p + 1:
        raise ValueError(f"{what} needs k > dims/p + 1 = {dims / p + 1:g}, got k={k}")


def commutator_parts(f: SpectralField, g: SpectralField, k: int, p: float = 2.0) -> tuple[float, float]:
    """Numerator and denominator of the commutator ratio.

    numerator   = ||D^k(fg) - f D^k g||_{L^p}
    denominator = ||grad f||_inf ||D^{k-1} g||_{L^p} + ||D^k f||_{L^p} ||g||_inf
    """
    grid = f.grid
    if f.components != 1 or g.components != 1:
        raise ValueError("commutator_ratio works on scalar fields")
    fr = f.real()[0]
    gr = g.real()[0]
    fg_hat = dealias(SpectralField.from_real(grid, fr * gr)).coeffs[0]
    comm = []
    for a in multi_indices(grid.dims, k):
        sym = derivative_symbol(grid, a)
        dg = grid.ifft(g.coeffs[0] * sym)
        f_dg = grid.fft(fr * dg) * grid.dealias_mask
        comm.append(sym * fg_hat - f_dg)
    comm_vals = grid.ifft(np.stack(comm))
    if math.isinf(p):
        num = float(np.max(np.abs(comm_vals)))
    else:
        num = float((np.sum(np.abs(comm_vals) ** p) * grid.cell_volume) ** (1.0 / p))
    den = grad_linf(f) * homogeneous_sobolev(g, k - 1, p) + homogeneous_sobolev(f, k, p) * lp_norm(g, math.inf)
    return num, den


def commutator_ratio(f: SpectralField, g: SpectralField, k: int, p: float = 2.0) -> float:
    _require_supercritical(k, p, f.grid.dims, "commutator_ratio")
    num, den = commutator_parts(f, g, k, p)
    scale = lp_norm(f, math.inf) * homogeneous_sobolev(g, k, p) + homogeneous_sobolev(f, k, p) * lp_norm(g, math.inf)
    if num <= 1e-12 * scale or num == 0.0:
        return 0.0
    if den <= 0.0:
        raise DegenerateSample(f"commutator denominator vanishes with numerator {num:.3g}")
    return num / den


def gn_exponent(k: int, p: float, dims: int) -> float:
    """Interpolation weight (p + n)/(k p) carried by ||D^k f||_{L^p}."""
    return (p + dims) / (k * p)


def gn_ratio(f: SpectralField, k: int, p: float = 2.0) -> float:
    """||grad f||_inf / (||f||_p^{1-s} ||D^k f||_p^s) with s = (p + n)/(k p)."""
    dims = f.grid.dims
    _require_supercritical(k, p, dims, "gn_ratio")
    s = gn_exponent(k, p, dims)
    dk = homogeneous_sobolev(f, k, p)
    if dk <= 1e-300:
        raise ValueError("gn_ratio is undefined for a constant field")
    return grad_linf(f) / (lp_norm(f, p) ** (1.0 - s) * dk**s)


@dataclass(frozen=True)
class FractionalCheck:
    lhs: float
    rhs: float
    ok: bool

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


def fractional_inequality_check(
    f: SpectralField, p: float, a: float, tol: float = 1e-10, power: str = "signed"
) -> FractionalCheck:
    """Both sides of  int |f|^{p-2} f Lambda^a f  >=  (2/p) int (Lambda^{a/2} h)^2.

    ``power="signed"`` takes h = |f|^{p/2 - 1} f, ``power="modulus"`` takes
    h = |f|^{p/2}.  The signed form is the stronger statement and collapses to
    an identity at p = 2.
    """
    if p < 2:
        raise ValueError(f"fractional inequality needs p >= 2, got {p}")
    if not 0 <= a <= 2:
        raise ValueError(f"a must lie in [0, 2], got {a}")
    if f.components != 1:
        raise ValueError("fractional_inequality_check works on scalar fields")
    grid = f.grid
    if a > 0 and not f.zero_mean:
        if abs(f.mean()[0]) > 1e-12:
            raise ValueError("fractional inequality with a > 0 needs a zero-mean field")
        f = f.remove_mean()
    fr = f.real()[0]
    absf = np.abs(fr)
    weight = absf ** (p - 2) if p != 2 else np.ones_like(fr)
    lam_f = grid.ifft(f.coeffs[0] * grid.kabs**a) if a > 0 else fr
    lhs = float(np.sum(weight * fr * lam_f) * grid.cell_volume)
    if power == "signed":
        h = absf ** (p / 2 - 1) * fr if p != 2 else fr
    elif power == "modulus":
        h = absf ** (p / 2)
    else:
        raise ValueError(f"power must be 'signed' or 'modulus', got {power!r}")
    if a > 0:
        h = grid.ifft(grid.fft(h) * grid.kabs ** (a / 2))
    rhs = float(2.0 / p * np.sum(h * h) * grid.cell_volume)
    return FractionalCheck(lhs, rhs, lhs >= rhs - tol * abs(rhs))


def cz_ratio(theta: SpectralField, partition: BesovPartition | None = None) -> float:
    """||grad v||_B / ||grad theta||_B with v the QG velocity of theta."""
    part = partition or BesovPartition(theta.grid)
    v = qg_velocity(theta)
    den = besov_b0inf1(gradient(theta), part)
    if den <= 0.0:
        raise DegenerateSample("grad theta vanishes")
    return besov_b0inf1(gradient(v), part) / den


# --- random samples and calibration --------------------------------------


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    cutoff: int,
    slope: float = 0.0,
    components: int = 1,
    zero_mean: bool = True,
) -> SpectralField:
    """Random real trigonometric polynomial with max_j |xi_j| <= cutoff and
    amplitude spectrum |xi|^-slope, normalized to unit L^2 norm per component."""
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    shape = (components,) + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    keep = (grid.kmax_abs <= cutoff) & (grid.k2 > 0)
    amp = np.where(keep, np.maximum(grid.kabs, 1.0) ** (-slope), 0.0)
    vals = grid.ifft(c * amp)
    f = SpectralField.from_real(grid, vals, zero_mean=True)
    norms = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=tuple(range(1, grid.dims + 1))))
    f = SpectralField(grid, f.coeffs / np.where(norms > 0, norms, 1.0)[(...,) + (None,) * grid.dims], True)
    if not zero_mean:
        c2 = f.coeffs.copy()
        c2[(slice(None),) + (0,) * grid.dims] = rng.standard_normal(components)
        f = SpectralField(grid, c2, False)
    return f


CALIBRATION_KINDS = ("C1", "C2", "C_CZ")


@dataclass
class CalibrationReport:
    """Running maximum of an inequality ratio over randomized samples."""

    kind: str
    trials: int
    seed: int
    constant: float
    argmax_descriptor: dict
    k: int | None = None
    p: float | None = None
    dims: int = 2
    n: int = 32
    degenerate: int = 0
    history: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("history")
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationReport":
        return cls(**json.loads(text))


def _sample_descriptor(rng: np.random.Generator, n: int) -> dict:
    return {
        "cutoff": int(rng.integers(1, max(1, n // 6) + 1)),
        "slope": float(rng.uniform(0.0, 4.0)),
    }


def calibration_sample_ratio(kind: str, grid: Grid, k: int, p: float, rng: np.random.Generator) -> tuple[float, dict]:
    """One randomized ratio for the given inequality kind."""
    desc = _sample_descriptor(rng, grid.n)
    if kind == "C1":
        f = random_field(grid, rng, desc["cutoff"], desc["slope"], zero_mean=bool(rng.integers(2)))
        desc2 = _sample_descriptor(rng, grid.n)
        g = random_field(grid, rng, desc2["cutoff"], desc2["slope"], zero_mean=bool(rng.integers(2)))
        desc = {"f": desc, "g": desc2}
        return commutator_ratio(f, g, k, p), desc
    if kind == "C2":
        f = random_field(grid, rng, desc["cutoff"], desc["slope"])
        return gn_ratio(f, k, p), desc
    if kind == "C_CZ":
        theta = random_field(grid, rng, desc["cutoff"], desc["slope"])
        return cz_ratio(theta), desc
    raise ValueError(f"unknown calibration kind {kind!r}; expected one of {CALIBRATION_KINDS}")


def calibrate(kind: str, trials: int, seed: int = 0, grid: Grid | None = None, k: int = 3, p: float = 2.0) -> CalibrationReport:
    """Empirical constant: max ratio over ``trials`` band-limited random samples.

    Trial i draws from child i of ``SeedSequence(seed)``, so a longer run
    extends a shorter one and the reported constant is a running maximum.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if kind not in CALIBRATION_KINDS:
        raise ValueError(f"unknown calibration kind {kind!r}; expected one of {CALIBRATION_KINDS}")
    grid = grid or Grid(2, 32)
    if kind == "C_CZ" and grid.dims != 2:
        raise ValueError("C_CZ calibration is two-dimensional")
    if kind != "C_CZ":
        _require_supercritical(k, p, grid.dims, f"{kind} calibration")
    children = np.random.SeedSequence(seed).spawn(trials)
    best, best_desc, degenerate = -math.inf, {}, 0
    history = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        try:
            r, desc = calibration_sample_ratio(kind, grid, k, p, rng)
        except DegenerateSample:
            degenerate += 1
            history.append(best)
            continue
        if r > best:
            best, best_desc = r, {"trial": i, **desc}
        history.append(best)
    return CalibrationReport(
        kind=kind,
        trials=trials,
        seed=seed,
        constant=float(best),
        argmax_descriptor=best_desc,
        k=None if kind == "C_CZ" else k,
        p=None if kind == "C_CZ" else p,
        dims=grid.dims,
        n=grid.n,
        degenerate=degenerate,
        history=history,
    )
