"""
Pseudo-spectral solvers for the 3D Navier-Stokes/Euler system and the 2D
dissipative quasi-geostrophic equation on periodic boxes.

Time stepping is the classical four-stage Runge-Kutta scheme in integrating
factor (Lawson) form: the linear dissipation exp(L dt) is applied exactly and
only the nonlinear transport goes through the RK stages.  Nonlinear products
are formed in real space and truncated with the 2/3 rule; the NS nonlinearity
uses the rotational form v x omega, whose gradient part is removed by the
Leray projection.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .norms import (
    BesovPartition,
    besov_b0inf1,
    homogeneous_sobolev,
    lp_norm,
    lp_of_values,
    random_field,
)
from .spectral import (
    Grid,
    SpectralField,
    curl,
    divergence,
    gradient,
    leray_project,
    qg_velocity,
)

log = logging.getLogger(__name__)

PRESETS = ("taylor_green", "qg_taylor_green", "qg_orthogonal", "random")


class SimulationError(RuntimeError):
    """Run aborted; ``last_valid`` is the index of the last finite sample."""

    def __init__(self, message: str, last_valid: int):
        super().__init__(message)
        self.last_valid = last_valid


class CFLViolation(ValueError):
    def __init__(self, courant: float, suggested_dt: float):
        super().__init__(f"Courant number {courant:.3g} exceeds the bound; try dt <= {suggested_dt:.3g}")
        self.courant = courant
        self.suggested_dt = suggested_dt


def fmt_exponent(p: float) -> str:
    if math.isinf(p):
        return "inf"
    return str(int(p)) if float(p).is_integer() else repr(float(p))


def lp_column(p: float) -> str:
    return f"lp_{fmt_exponent(p)}"


def dk_column(k: int, p: float) -> str:
    return f"dkl_{k}_{fmt_exponent(p)}"


def parse_exponent(text: str) -> float:
    return math.inf if text == "inf" else float(text)


@dataclass
class SimConfig:
    system: str = "qg"  # "qg" or "ns"
    n: int = 256
    t_end: float = 1.0
    dt: float = 2.5e-3
    nu: float = 0.0
    kappa: float = 0.0
    alpha: float = 1.0
    cfl: float | None = None  # None: fixed dt; else dt_k = min(dt, cfl * dx / max|v|)
    max_courant: float = 1.0
    stride: int = 1
    preset: str = "qg_orthogonal"
    amplitude: float = 1.0
    seed: int = 0
    slope: float = 2.0
    cutoff: int | None = None
    norms: tuple[tuple[int, float], ...] = ((0, 2.0),)
    besov: bool = False
    vorticity: bool = False
    tail_tol: float = 1e-6

    def __post_init__(self):
        self.system = self.system.lower()
        self.norms = tuple((int(k), float(p)) for k, p in self.norms)
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def dims(self) -> int:
        return 3 if self.system == "ns" else 2

    @property
    def grid(self) -> Grid:
        return Grid(self.dims, self.n)

    def validate(self) -> list[str]:
        errors = []
        if self.system not in ("qg", "ns"):
            errors.append(f"system must be 'qg' or 'ns', got {self.system!r}")
        if self.nu < 0:
            errors.append(f"nu must be >= 0, got {self.nu}")
        if self.kappa < 0:
            errors.append(f"kappa must be >= 0, got {self.kappa}")
        if not 0 <= self.alpha <= 2:
            errors.append(f"alpha must lie in [0, 2], got {self.alpha}")
        if not self.t_end > 0:
            errors.append(f"t_end must be > 0, got {self.t_end}")
        if not self.dt > 0:
            errors.append(f"dt must be > 0, got {self.dt}")
        if self.stride < 1:
            errors.append(f"stride must be >= 1, got {self.stride}")
        if self.n < 16 or self.n % 2:
            errors.append(f"n must be even and >= 16, got {self.n}")
        if self.preset not in PRESETS:
            errors.append(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        for k, p in self.norms:
            if k < 0 or p < 1:
                errors.append(f"norm menu entry ({k}, {p}) needs k >= 0 and p >= 1")
        return errors

    @property
    def column_names(self) -> list[str]:
        cols = ["t", "l2"]
        for k, p in self.norms:
            name = lp_column(p) if k == 0 else dk_column(k, p)
            if name not in cols and not (k == 0 and p == 2):
                cols.append(name)
        cols.append("grad_linf")
        if self.besov:
            cols.append("besov_b0inf1")
        if (self.system == "ns" and self.nu > 0) or (self.system == "qg" and self.kappa > 0):
            cols.append("dissipation")
        if self.vorticity:
            cols.append("vorticity_linf")
        return cols


# --- norm series ------------------------------------------------------------


@dataclass
class NormSeries:
    """Time-indexed table of tracked norms; ``columns`` excludes ``t``."""

    t: np.ndarray
    columns: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("NormSeries times must be strictly increasing")
        for name, col in self.columns.items():
            if col.shape != self.t.shape:
                raise ValueError(f"column {name} has {col.size} samples, expected {self.t.size}")

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"norm series has no column {name!r}; available: {', '.join(self.names)}") from None

    def __contains__(self, name: str) -> bool:
        return name == "t" or name in self.columns

    def __len__(self) -> int:
        return self.t.size

    @property
    def names(self) -> list[str]:
        return ["t", *self.columns]

    def head(self, m: int) -> "NormSeries":
        return NormSeries(self.t[:m], {k: v[:m] for k, v in self.columns.items()}, dict(self.meta))

    def every(self, step: int) -> "NormSeries":
        """Every ``step``-th sample (the last sample is always kept)."""
        idx = np.arange(0, len(self), step)
        if idx[-1] != len(self) - 1:
            idx = np.append(idx, len(self) - 1)
        return NormSeries(self.t[idx], {k: v[idx] for k, v in self.columns.items()}, dict(self.meta))

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.t, *self.columns.values()])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(self.names), comments="")

    @classmethod
    def from_csv(cls, path: str | Path) -> "NormSeries":
        with open(path) as fh:
            header = [h.strip() for h in fh.readline().split(",")]
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't', got {header[:1]}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != len(header):
            raise ValueError(f"{path}: header names {len(header)} columns, rows have {data.shape[1]}")
        return cls(data[:, 0], {h: data[:, i] for i, h in enumerate(header) if i > 0})


# --- initial data -----------------------------------------------------------


def init_preset(name: str, amplitude: float, seed: int, grid: Grid, slope: float = 2.0, cutoff: int | None = None) -> SpectralField:
    """Initial field: divergence-free velocity in 3D, zero-mean scalar in 2D."""
    x = grid.x
    if name == "taylor_green":
        if grid.dims != 3:
            raise ValueError("taylor_green is a 3D preset")
        u = np.broadcast_to(np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]), grid.shape)
        v = np.broadcast_to(-np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]), grid.shape)
        vals = amplitude * np.stack([u, v, np.zeros(grid.shape)])
        return SpectralField.from_real(grid, vals, zero_mean=True)
    if name == "qg_taylor_green":
        if grid.dims != 2:
            raise ValueError("qg_taylor_green is a 2D preset")
        vals = amplitude * np.sin(x[0]) * np.sin(x[1])
        return SpectralField.from_real(grid, vals, zero_mean=True)
    if name == "qg_orthogonal":
        if grid.dims != 2:
            raise ValueError("qg_orthogonal is a 2D preset")
        vals = amplitude * (np.cos(x[0]) + np.cos(x[1]) + 0.5 * np.cos(x[0] + x[1]))
        return SpectralField.from_real(grid, vals, zero_mean=True)
    if name == "random":
        rng = np.random.default_rng(seed)
        cut = cutoff if cutoff is not None else max(1, grid.n // 8)
        comps = grid.dims if grid.dims == 3 else 1
        f = random_field(grid, rng, cut, slope, components=comps)
        if comps > 1:
            f = leray_project(f)
        peak = lp_norm(f, math.inf)
        return f * (amplitude / peak) if peak > 0 else f
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# --- right-hand sides ------------------------------------------------------


def _check_divergence_free(v: SpectralField, tol: float = 1e-10) -> None:
    div = np.max(np.abs(divergence(v).coeffs))
    scale = max(1.0, float(np.max(np.abs(v.coeffs))))
    if div > tol * scale:
        raise ValueError(f"velocity is not divergence-free (max |div| coefficient {div:.3g})")


def ns_nonlinear(v: SpectralField) -> np.ndarray:
    """Coefficients of P[(v x omega) truncated] = -P[(v . grad) v]."""
    g = v.grid
    u = v.real()
    w = curl(v).real()
    cross = np.stack([
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ])
    c = g.fft(cross) * g.dealias_mask
    return leray_project(SpectralField(g, c)).coeffs


def qg_nonlinear(theta: SpectralField) -> np.ndarray:
    """Coefficients of -(v . grad theta), truncated, mean mode removed."""
    g = theta.grid
    vel = qg_velocity(theta).real()
    grad = gradient(theta).real()
    adv = vel[0] * grad[0] + vel[1] * grad[1]
    c = g.fft(-adv[None]) * g.dealias_mask
    c[(0,) + (0,) * g.dims] = 0.0
    return c


def rhs_ns(v: SpectralField, nu: float = 0.0) -> SpectralField:
    """Leray-projected, dealiased -(v . grad) v + nu Laplacian v."""
    if v.grid.dims != 3 or v.components != 3:
        raise ValueError("rhs_ns needs a 3D vector field")
    _check_divergence_free(v)
    c = ns_nonlinear(v) - nu * v.grid.k2 * v.coeffs
    return SpectralField(v.grid, c, v.zero_mean)


def rhs_qg(theta: SpectralField, kappa: float = 0.0, alpha: float = 1.0) -> SpectralField:
    """Dealiased -(v . grad) theta - kappa Lambda^alpha theta."""
    if theta.grid.dims != 2:
        raise ValueError(f"rhs_qg needs dims=2, got dims={theta.grid.dims}")
    c = qg_nonlinear(theta) - kappa * theta.grid.kabs**alpha * theta.coeffs
    return SpectralField(theta.grid, c, True)


@dataclass(frozen=True)
class Problem:
    """Physical parameters shared by the right-hand side and the stepper."""

    system: str
    nu: float = 0.0
    kappa: float = 0.0
    alpha: float = 1.0
    max_courant: float = 1.0

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "Problem":
        return cls(cfg.system, cfg.nu, cfg.kappa, cfg.alpha, cfg.max_courant)

    def linear_symbol(self, grid: Grid) -> np.ndarray:
        if self.system == "ns":
            return -self.nu * grid.k2
        return -self.kappa * grid.kabs**self.alpha

    def nonlinear(self, f: SpectralField) -> np.ndarray:
        return ns_nonlinear(f) if self.system == "ns" else qg_nonlinear(f)

    def velocity(self, f: SpectralField) -> np.ndarray:
        return f.real() if self.system == "ns" else qg_velocity(f).real()


def max_speed(f: SpectralField, problem: Problem) -> float:
    return lp_of_values(f.grid, problem.velocity(f), math.inf)


def step(f: SpectralField, dt: float, problem: Problem, speed: float | None = None) -> SpectralField:
    """Advance one Lawson-RK4 step of size ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    g = f.grid
    dx = 2 * np.pi / g.n
    speed = max_speed(f, problem) if speed is None else speed
    courant = dt * speed / dx
    if courant > problem.max_courant:
        raise CFLViolation(courant, 0.9 * problem.max_courant * dx / speed)
    lin = problem.linear_symbol(g)
    e_half = np.exp(0.5 * dt * lin)
    e_full = e_half * e_half
    u = f.coeffs
    zm = f.zero_mean

    def nl(c):
        return problem.nonlinear(SpectralField(g, c, zm))

    k1 = nl(u)
    k2 = nl(e_half * (u + 0.5 * dt * k1))
    k3 = nl(e_half * u + 0.5 * dt * k2)
    k4 = nl(e_full * u + dt * e_half * k3)
    out = e_full * u + dt / 6.0 * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
    return SpectralField(g, out, zm)


# --- diagnostics -------------------------------------------------------------


def tail_fraction(f: SpectralField) -> float:
    """Share of L^2 energy in the top third of the retained (2/3-rule) band."""
    g = f.grid
    e = np.sum(np.abs(f.coeffs) ** 2, axis=0)
    total = float(np.sum(e))
    if total == 0.0:
        return 0.0
    tail = g.kmax_abs > (2.0 / 3.0) * (g.n / 3.0)
    return float(np.sum(e[tail])) / total


def sample_norms(f: SpectralField, cfg: SimConfig, partition: BesovPartition | None = None) -> dict[str, float]:
    """All norms in the configured menu for one state."""
    out = {"l2": lp_norm(f, 2.0)}
    for k, p in cfg.norms:
        if k == 0:
            if p != 2:
                out[lp_column(p)] = lp_norm(f, p)
        else:
            out[dk_column(k, p)] = homogeneous_sobolev(f, k, p)
    grad = gradient(f)
    out["grad_linf"] = lp_norm(grad, math.inf)
    if cfg.besov:
        out["besov_b0inf1"] = besov_b0inf1(grad, partition)
    if "dissipation" in cfg.column_names:
        if cfg.system == "ns":
            out["dissipation"] = cfg.nu * lp_norm(grad, 2.0) ** 2
        else:
            g = f.grid
            half = SpectralField(g, f.coeffs * g.kabs ** (cfg.alpha / 2), True)
            out["dissipation"] = cfg.kappa * lp_norm(half, 2.0) ** 2
    if cfg.vorticity:
        out["vorticity_linf"] = lp_norm(curl(f), math.inf)
    return out


@dataclass
class RunResult:
    series: NormSeries
    final: SpectralField
    t_final: float
    steps: int
    aborted: bool = False
    warnings: list[str] = field(default_factory=list)


def initial_field(cfg: SimConfig) -> SpectralField:
    return init_preset(cfg.preset, cfg.amplitude, cfg.seed, cfg.grid, cfg.slope, cfg.cutoff)


def run(cfg: SimConfig, snapshot_dir: str | Path | None = None) -> RunResult:
    """Integrate from the preset initial state to ``t_end``, sampling every ``stride`` steps.

    Deterministic for a fixed config.  Non-finite norms raise SimulationError;
    an under-resolved state (tail energy above ``tail_tol``) stops the run with
    a warning and returns the samples gathered so far.
    """
    from .spectral import write_snapshot

    grid = cfg.grid
    problem = Problem.from_config(cfg)
    part = BesovPartition(grid) if cfg.besov else None
    f = initial_field(cfg)
    if cfg.system == "ns":
        _check_divergence_free(f)
    names = cfg.column_names[1:]
    rows: list[dict[str, float]] = []
    times: list[float] = []
    notes: list[str] = []

    def record(t: float, state: SpectralField) -> None:
        vals = sample_norms(state, cfg, part)
        bad = [k for k, v in vals.items() if not math.isfinite(v)]
        if bad:
            raise SimulationError(
                f"non-finite {', '.join(bad)} at t={t:.6g}; last valid sample index {len(rows) - 1}",
                len(rows) - 1,
            )
        rows.append(vals)
        times.append(t)

    t, nstep, aborted = 0.0, 0, False
    record(t, f)
    dx = 2 * np.pi / grid.n
    while t < cfg.t_end * (1 - 1e-12):
        speed = max_speed(f, problem)
        dt = cfg.dt
        if cfg.cfl is not None and speed > 0:
            dt = min(dt, cfg.cfl * dx / speed)
        dt = min(dt, cfg.t_end - t)
        f = step(f, dt, problem, speed)
        nstep += 1
        t = cfg.dt * nstep if cfg.cfl is None else t + dt
        t = min(t, cfg.t_end)
        last = t >= cfg.t_end * (1 - 1e-12)
        if nstep % cfg.stride == 0 or last:
            record(t, f)
            frac = tail_fraction(f)
            if frac > cfg.tail_tol:
                msg = f"spectral tail holds {frac:.2e} of the energy at t={t:.6g} (> {cfg.tail_tol:g}); stopping"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
                aborted = True
                break
    series = NormSeries(
        np.array(times),
        {k: np.array([r[k] for r in rows]) for k in names},
        {"system": cfg.system, "n": cfg.n, "nu": cfg.nu, "kappa": cfg.kappa, "alpha": cfg.alpha},
    )
    if snapshot_dir is not None:
        write_snapshot(Path(snapshot_dir) / "final_state.bin", f, t)
    log.info("run finished at t=%g after %d steps (%d samples)", t, nstep, len(series))
    return RunResult(series, f, t, nstep, aborted, notes)
