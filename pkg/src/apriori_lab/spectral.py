"""
Fourier infrastructure on the periodic box [0, 2*pi)^d.

A real field is stored through its normalized Fourier coefficients

    f(x) = sum_xi  fhat(xi) * exp(i xi . x),      fhat = fftn(f) / n**d

so coefficients are independent of the resolution.  Every operator here is a
Fourier multiplier and returns a fresh field.

Conventions
-----------
* Riesz transform:       R_j  <->  i xi_j / |xi|
* QG velocity:           v = grad^perp Lambda^{-1} theta  <->  (-i xi_2, i xi_1) / |xi|
* Odd multipliers (derivatives of odd order, Riesz, Leray, QG velocity) vanish
  on the Nyquist plane of the axis concerned, which keeps real fields real.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("APRIORI_LAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with ``n`` points per axis on a box of side 2*pi."""

    dims: int
    n: int

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.n < 16 or self.n % 2:
            raise ValueError(f"n must be even and >= 16, got {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dims

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dims, 0))

    @property
    def cell_volume(self) -> float:
        return (2 * np.pi / self.n) ** self.dims

    @property
    def volume(self) -> float:
        return (2 * np.pi) ** self.dims

    @cached_property
    def x(self) -> list[np.ndarray]:
        """Coordinate arrays, broadcastable to ``shape``."""
        x1 = 2 * np.pi * np.arange(self.n) / self.n
        return list(np.meshgrid(*([x1] * self.dims), indexing="ij", sparse=True))

    @cached_property
    def k(self) -> list[np.ndarray]:
        """Integer wavevector components in FFT order, range [-n/2, n/2)."""
        k1 = np.fft.fftfreq(self.n, 1.0 / self.n)
        return list(np.meshgrid(*([k1] * self.dims), indexing="ij", sparse=True))

    @cached_property
    def k_odd(self) -> list[np.ndarray]:
        """Wavevector components with the Nyquist entry zeroed (for odd symbols)."""
        k1 = np.fft.fftfreq(self.n, 1.0 / self.n)
        k1[self.n // 2] = 0.0
        return list(np.meshgrid(*([k1] * self.dims), indexing="ij", sparse=True))

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(kj**2 for kj in self.k)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def kmax_abs(self) -> np.ndarray:
        """max_j |xi_j| for every wavevector."""
        out = np.abs(self.k[0])
        for kj in self.k[1:]:
            out = np.maximum(out, np.abs(kj))
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return self.kmax_abs <= self.n / 3

    def _negate(self, a: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
        """Re-index ``a`` from xi to -xi along ``axes``."""
        return np.roll(np.flip(a, axis=axes), 1, axis=axes)

    def fft(self, values: np.ndarray) -> np.ndarray:
        """Normalized coefficients of real grid values (real-to-complex, then Hermitian fill)."""
        if np.iscomplexobj(values):
            return scipy.fft.fftn(values, axes=self.axes, workers=_workers()) / self.n**self.dims
        n, h = self.n, self.n // 2
        half = scipy.fft.rfftn(values, axes=self.axes, workers=_workers())
        out = np.empty(half.shape[:-1] + (n,), dtype=np.complex128)
        out[..., : h + 1] = half
        mirror = half[..., 1:h][..., ::-1]
        out[..., h + 1 :] = np.conj(self._negate(mirror, self.axes[:-1]))
        out /= n**self.dims
        return out

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        """Real part of the inverse transform, i.e. the field of the Hermitian part of ``coeffs``."""
        n, h = self.n, self.n // 2
        last = coeffs[..., : h + 1]
        neg_idx = (-np.arange(h + 1)) % n
        partner = np.conj(self._negate(coeffs[..., neg_idx], self.axes[:-1]))
        herm = 0.5 * (last + partner)
        return scipy.fft.irfftn(herm * n**self.dims, s=self.shape, axes=self.axes, workers=_workers())


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real scalar or vector field held as Fourier coefficients.

    ``coeffs`` always carries a leading component axis: shape ``(c, n, ..., n)``
    with ``c == 1`` for scalars and ``c == dims`` for vector fields.  The
    ``zero_mean`` flag records that the mean mode is known to vanish.
    """

    grid: Grid
    coeffs: np.ndarray
    zero_mean: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape[1:] != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        c = c.astype(np.complex128, copy=False)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_real(cls, grid: Grid, values, zero_mean: bool = False) -> "SpectralField":
        v = np.asarray(values, dtype=float)
        if v.shape == grid.shape:
            v = v[None]
        coeffs = grid.fft(v)
        if zero_mean:
            coeffs[(slice(None),) + (0,) * grid.dims] = 0.0
        return cls(grid, coeffs, zero_mean)

    @classmethod
    def zeros(cls, grid: Grid, components: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((components,) + grid.shape, complex), True)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.components > 1

    def real(self) -> np.ndarray:
        """Grid values, shape ``(c, n, ..., n)``."""
        return self.grid.ifft(self.coeffs)

    def mean(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.dims].real.copy()

    def with_coeffs(self, coeffs: np.ndarray, zero_mean: bool | None = None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.zero_mean if zero_mean is None else zero_mean)

    def component(self, j: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[j : j + 1], self.zero_mean)

    def remove_mean(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[(slice(None),) + (0,) * self.grid.dims] = 0.0
        return SpectralField(self.grid, c, True)

    def hermitian_defect(self) -> float:
        """max |fhat(-xi) - conj(fhat(xi))|; zero for a real field."""
        flipped = np.flip(self.coeffs, axis=tuple(range(1, self.grid.dims + 1)))
        flipped = np.roll(flipped, 1, axis=tuple(range(1, self.grid.dims + 1)))
        return float(np.max(np.abs(flipped - np.conj(self.coeffs)), initial=0.0))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.zero_mean and other.zero_mean)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.zero_mean and other.zero_mean)

    def __mul__(self, c: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * c, self.zero_mean)

    __rmul__ = __mul__


def _require_zero_mean(f: SpectralField, what: str) -> None:
    mean = np.abs(f.coeffs[(slice(None),) + (0,) * f.grid.dims])
    if not f.zero_mean and np.any(mean > 1e-12 * max(1.0, float(np.max(np.abs(f.coeffs))))):
        raise ValueError(f"{what} requires a zero-mean field")


def derivative_symbol(grid: Grid, alpha: Sequence[int]) -> np.ndarray:
    """Multiplier prod_j (i xi_j)^alpha_j (Nyquist dropped on odd-order axes)."""
    sym = np.ones(grid.shape, complex)
    for j, a in enumerate(alpha):
        if a == 0:
            continue
        kj = grid.k_odd[j] if a % 2 else grid.k[j]
        sym = sym * (1j * kj) ** a
    return sym


def spectral_derivative(f: SpectralField, alpha: Sequence[int]) -> SpectralField:
    """D^alpha f for a multi-index ``alpha`` of length ``dims``."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != f.grid.dims:
        raise ValueError(f"multi-index {alpha} has length {len(alpha)}, grid has dims={f.grid.dims}")
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index entries must be nonnegative, got {alpha}")
    if sum(alpha) == 0:
        return f.with_coeffs(f.coeffs.copy())
    return SpectralField(f.grid, f.coeffs * derivative_symbol(f.grid, alpha), True)


def gradient(f: SpectralField) -> SpectralField:
    """Gradient of a scalar field, or the flattened Jacobian (d*c components) of a vector field."""
    g = f.grid
    parts = [f.coeffs * (1j * g.k_odd[j]) for j in range(g.dims)]
    # component-major: d_j f_c stored at index c*dims + j
    stacked = np.stack(parts, axis=1).reshape((f.components * g.dims,) + g.shape)
    return SpectralField(g, stacked, True)


def divergence(u: SpectralField) -> SpectralField:
    g = u.grid
    if u.components != g.dims:
        raise ValueError("divergence needs a vector field")
    c = sum(1j * g.k_odd[j] * u.coeffs[j] for j in range(g.dims))
    return SpectralField(g, c[None], True)


def curl(u: SpectralField) -> SpectralField:
    """Vorticity of a 3D vector field (scalar vorticity in 2D)."""
    g = u.grid
    k = g.k_odd
    c = u.coeffs
    if g.dims == 3:
        w = np.stack([
            1j * (k[1] * c[2] - k[2] * c[1]),
            1j * (k[2] * c[0] - k[0] * c[2]),
            1j * (k[0] * c[1] - k[1] * c[0]),
        ])
    else:
        w = (1j * (k[0] * c[1] - k[1] * c[0]))[None]
    return SpectralField(g, w, True)


def fractional_laplacian(f: SpectralField, a: float) -> SpectralField:
    """Lambda^a f = (-Laplacian)^{a/2} f, multiplier |xi|^a."""
    if a < 0:
        raise ValueError(f"fractional_laplacian needs a >= 0, got {a}; use inverse_fractional_laplacian")
    if a == 0:
        return f.with_coeffs(f.coeffs.copy())
    return SpectralField(f.grid, f.coeffs * f.grid.kabs**a, True)


def inverse_fractional_laplacian(f: SpectralField, a: float) -> SpectralField:
    """Lambda^{-a} f on the zero-mean subspace (mean mode set to 0)."""
    if not 0 <= a <= f.grid.dims:
        raise ValueError(f"inverse order must lie in [0, dims], got {a}")
    _require_zero_mean(f, "inverse_fractional_laplacian")
    g = f.grid
    with np.errstate(divide="ignore"):
        sym = np.where(g.k2 > 0, g.kabs ** (-a), 0.0)
    return SpectralField(g, f.coeffs * sym, True)


def _riesz_symbol(grid: Grid, j: int) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(grid.k2 > 0, 1j * grid.k_odd[j] / np.where(grid.k2 > 0, grid.kabs, 1.0), 0.0)


def riesz_transform(f: SpectralField, j: int) -> SpectralField:
    """R_j f with symbol i xi_j / |xi| (axis ``j`` is 0-based)."""
    if not 0 <= j < f.grid.dims:
        raise ValueError(f"axis {j} out of range for dims={f.grid.dims}")
    _require_zero_mean(f, "riesz_transform")
    return SpectralField(f.grid, f.coeffs * _riesz_symbol(f.grid, j), True)


def leray_project(u: SpectralField) -> SpectralField:
    """Orthogonal projection onto divergence-free fields: (I - xi xi^T / |xi|^2) uhat."""
    g = u.grid
    if u.components != g.dims:
        raise ValueError("leray_project needs a vector field with dims components")
    k = g.k_odd
    k2 = sum(kj**2 for kj in k)
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    kdotu = sum(k[j] * u.coeffs[j] for j in range(g.dims))
    out = np.stack([u.coeffs[j] - k[j] * kdotu * inv for j in range(g.dims)])
    return SpectralField(g, out, u.zero_mean)


def qg_velocity(theta: SpectralField) -> SpectralField:
    """v = grad^perp (-Laplacian)^{-1/2} theta, symbol (-i xi_2, i xi_1)/|xi|."""
    g = theta.grid
    if g.dims != 2:
        raise ValueError(f"qg_velocity is defined for dims=2, got dims={g.dims}")
    if theta.components != 1:
        raise ValueError("qg_velocity needs a scalar field")
    _require_zero_mean(theta, "qg_velocity")
    r0 = _riesz_symbol(g, 0)
    r1 = _riesz_symbol(g, 1)
    c = theta.coeffs[0]
    return SpectralField(g, np.stack([-r1 * c, r0 * c]), True)


def dealias(f: SpectralField) -> SpectralField:
    """2/3-rule truncation: zero every coefficient with some |xi_j| > n/3."""
    return f.with_coeffs(np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased pointwise product of two scalar fields."""
    vals = f.real()[0] * g.real()[0]
    return dealias(SpectralField.from_real(f.grid, vals))


# --- snapshot files -------------------------------------------------------

_HEADER = struct.Struct("<iiid")


def write_snapshot(path: str | Path, f: SpectralField, time: float = 0.0) -> None:
    """Binary snapshot: little-endian header (dims, n, components, time) then
    coefficients as (re, im) float64 pairs, component-major, each axis ordered
    by ascending xi from -n/2 to n/2 - 1 (row-major)."""
    g = f.grid
    shifted = np.fft.fftshift(f.coeffs, axes=tuple(range(1, g.dims + 1)))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.dims, g.n, f.components, float(time)))
        fh.write(np.ascontiguousarray(shifted).astype("<c16").tobytes())


def read_snapshot(path: str | Path) -> tuple[SpectralField, float]:
    raw = Path(path).read_bytes()
    dims, n, comps, time = _HEADER.unpack_from(raw)
    grid = Grid(dims, n)
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    expected = comps * n**dims
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} coefficients, found {data.size}")
    coeffs = np.fft.ifftshift(data.reshape((comps,) + grid.shape), axes=tuple(range(1, dims + 1)))
    return SpectralField(grid, coeffs.astype(complex)), time
