"""Spectral fields on a periodic box.

The box has side ``2*pi*L_i`` along axis ``i`` and is sampled with ``N_i``
points, so the frequency lattice is ``{k_i / L_i}``.  Coefficients are stored
as ``rfftn`` half-spectra scaled by the cell volume, which makes lattice sums
Riemann sums for Fourier integrals on R^d::

    f_hat(xi) ~= integral f(x) exp(-i x.xi) dx = cell_volume * fft(samples)

With this convention Parseval reads
``||f||_{L^2}^2 = sum |f_hat|^2 / box_volume`` and the Fourier L^1 norm is
``sum |f_hat| / prod(L_i)``.  All calculus operators (derivatives, inverse
Laplacian, Leray projection) use the wavevector with Nyquist entries set to
zero so that every operator maps real fields to real fields consistently.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

FORMAT_NAME = "boussinesq-lab-field"
FORMAT_VERSION = 1


class ZeroModeWarning(UserWarning):
    """Raised when (-Delta)^{-1} is applied to a field with a non-negligible mean."""


class ShellTruncationWarning(UserWarning):
    """A dyadic shell carrying part of a norm extends past the grid's frequency range."""


def _broadcast(value, d, kind):
    if np.ndim(value) == 0:
        return tuple(kind(value) for _ in range(d))
    values = tuple(kind(v) for v in value)
    if len(values) != d:
        raise ValueError(f"expected {d} entries, got {len(values)}")
    return values


@dataclass(frozen=True)
class GridSpec:
    """Periodic box ``prod_i [0, 2 pi L_i)`` sampled with ``N_i`` points per axis.

    ``L`` and ``N`` accept a scalar (isotropic box) or one entry per axis.
    """

    d: int
    L: tuple[float, ...]
    N: tuple[int, ...]
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        object.__setattr__(self, "L", _broadcast(self.L, self.d, float))
        object.__setattr__(self, "N", _broadcast(self.N, self.d, int))
        for n in self.N:
            if n < 8 or n % 2:
                raise ValueError(f"points per axis must be even and >= 8, got {n}")
        if any(not (ell > 0 and math.isfinite(ell)) for ell in self.L):
            raise ValueError(f"box scale must be positive, got {self.L}")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")

    # -- geometry ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.N

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.N[:-1] + (self.N[-1] // 2 + 1,)

    @cached_property
    def dx(self) -> tuple[float, ...]:
        return tuple(2 * np.pi * ell / n for ell, n in zip(self.L, self.N))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @cached_property
    def box_volume(self) -> float:
        return float(np.prod([2 * np.pi * ell for ell in self.L]))

    @cached_property
    def lattice_cell(self) -> float:
        """Volume of one frequency-lattice cell, prod(1/L_i)."""
        return float(np.prod([1.0 / ell for ell in self.L]))

    @cached_property
    def max_frequency(self) -> tuple[float, ...]:
        """Largest resolvable frequency per axis, N_i / (2 L_i)."""
        return tuple(n / (2 * ell) for n, ell in zip(self.N, self.L))

    @cached_property
    def dealias_frequency(self) -> tuple[float, ...]:
        """Per-axis frequency cutoff of the dealiasing mask."""
        return tuple(self.dealias_fraction * f for f in self.max_frequency)

    def coords(self) -> list[np.ndarray]:
        """Broadcastable physical coordinate arrays."""
        out = []
        for i, (n, h) in enumerate(zip(self.N, self.dx)):
            shape = [1] * self.d
            shape[i] = n
            out.append((np.arange(n) * h).reshape(shape))
        return out

    # -- frequency lattice ------------------------------------------------
    def _index_arrays(self):
        idx = []
        for i, n in enumerate(self.N):
            if i == self.d - 1:
                k = np.arange(n // 2 + 1, dtype=float)
            else:
                k = np.fft.fftfreq(n, 1.0 / n)
            shape = [1] * self.d
            shape[i] = k.size
            idx.append(k.reshape(shape))
        return idx

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        """True lattice frequencies k_i / L_i (broadcastable)."""
        return tuple(k / ell for k, ell in zip(self._index_arrays(), self.L))

    @cached_property
    def k(self) -> tuple[np.ndarray, ...]:
        """Frequencies used by calculus operators: Nyquist entries zeroed."""
        out = []
        for k, n, ell in zip(self._index_arrays(), self.N, self.L):
            k = k.copy()
            k[np.abs(k) == n // 2] = 0.0
            out.append(k / ell)
        return tuple(out)

    @cached_property
    def xi_mag(self) -> np.ndarray:
        return np.sqrt(sum(x**2 for x in self.xi))

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.k) * np.ones(self.spectral_shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Per-axis 2/3-rule mask: keep |k_i| < fraction * N_i / 2."""
        mask = np.ones(self.spectral_shape, dtype=bool)
        for x, cut in zip(self.xi, self.dealias_frequency):
            mask &= np.abs(x) < cut * (1 - 1e-12)
        return mask

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Weight turning a half-spectrum sum into a full-lattice sum."""
        n = self.N[-1]
        w = np.full(n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        shape = [1] * self.d
        shape[-1] = w.size
        return np.broadcast_to(w.reshape(shape), self.spectral_shape)

    def sobolev_weight(self, m: int, include_zero: bool = True) -> np.ndarray:
        """Spectral weight of ``sum_{|beta| <= m} ||D^beta f||^2``.

        The sum runs over multi-indices exactly (no multinomial factors), so
        the weight is ``sum_beta prod_i k_i^(2 beta_i)``.
        """
        return _sobolev_weight(self, m, include_zero)


def _sobolev_weight(grid: GridSpec, m: int, include_zero: bool) -> np.ndarray:
    cache = grid.__dict__.setdefault("_sobolev_cache", {})
    key = (m, include_zero)
    if key not in cache:
        k2 = [k**2 for k in grid.k]
        w = np.zeros(grid.spectral_shape)
        for beta in multi_indices(grid.d, m):
            if not include_zero and sum(beta) == 0:
                continue
            term = np.ones(grid.spectral_shape)
            for kk, b in zip(k2, beta):
                if b:
                    term = term * kk**b
            w += term
        cache[key] = w
    return cache[key]


def multi_indices(d: int, m: int, min_order: int = 0) -> list[tuple[int, ...]]:
    """All multi-indices beta in N^d with min_order <= |beta| <= m."""
    return [
        beta
        for beta in itertools.product(range(m + 1), repeat=d)
        if min_order <= sum(beta) <= m
    ]


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real field with ``m`` components stored as scaled half-spectra.

    ``coeffs`` has shape ``(m, *grid.spectral_shape)``.  Instances are treated
    as immutable values; operations return new fields.
    """

    grid: GridSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape == self.grid.spectral_shape:
            c = c[np.newaxis]
        if c.shape[1:] != self.grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}"
            )
        object.__setattr__(self, "coeffs", c)

    # -- construction -----------------------------------------------------
    @classmethod
    def from_physical(cls, grid: GridSpec, samples: np.ndarray) -> "SpectralField":
        samples = np.asarray(samples, dtype=float)
        if samples.shape == grid.shape:
            samples = samples[np.newaxis]
        axes = tuple(range(1, grid.d + 1))
        coeffs = np.fft.rfftn(samples, axes=axes) * grid.cell_volume
        return cls(grid, coeffs)

    @classmethod
    def zeros(cls, grid: GridSpec, m: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((m,) + grid.spectral_shape, dtype=complex))

    @classmethod
    def stack(cls, fields: Sequence["SpectralField"]) -> "SpectralField":
        grid = fields[0].grid
        for f in fields:
            _check_grid(grid, f)
        return cls(grid, np.concatenate([f.coeffs for f in fields], axis=0))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "SpectralField":
        return cls.from_physical(grid, np.full(grid.shape, float(value)))

    # -- views ------------------------------------------------------------
    @property
    def m(self) -> int:
        return self.coeffs.shape[0]

    def physical(self) -> np.ndarray:
        """Samples on the grid, shape ``(m, *grid.shape)``."""
        axes = tuple(range(1, self.grid.d + 1))
        return np.fft.irfftn(self.coeffs / self.grid.cell_volume, s=self.grid.shape, axes=axes)

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i : i + 1])

    def components(self) -> list["SpectralField"]:
        return [self.component(i) for i in range(self.m)]

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def hermitian_defect(self) -> float:
        """Max violation of coeff(-k) = conj(coeff(k)) on the self-conjugate planes."""
        worst = 0.0
        last = [0]
        if self.grid.N[-1] % 2 == 0:
            last.append(self.grid.spectral_shape[-1] - 1)
        for j in last:
            plane = self.coeffs[..., j]
            flipped = plane
            for ax in range(1, self.grid.d):
                flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
            worst = max(worst, float(np.max(np.abs(plane - np.conj(flipped)), initial=0.0)))
        return worst

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self.grid, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self.grid, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs / scalar)


def _check_grid(grid: GridSpec, f: SpectralField) -> None:
    if f.grid != grid:
        raise ValueError("fields live on different grids")


# -- calculus -------------------------------------------------------------


def transform_roundtrip(f: SpectralField) -> SpectralField:
    """Spectral -> physical -> spectral."""
    return SpectralField.from_physical(f.grid, f.physical())


def derivative(f: SpectralField, beta: Sequence[int]) -> SpectralField:
    """D^beta f, i.e. multiply coefficients by (i xi)^beta."""
    beta = tuple(int(b) for b in beta)
    if len(beta) != f.grid.d or any(b < 0 for b in beta):
        raise ValueError(f"invalid multi-index {beta} for d={f.grid.d}")
    if sum(beta) > 4:
        raise ValueError("derivatives of total order > 4 are not supported")
    symbol = np.ones(f.grid.spectral_shape, dtype=complex)
    for k, b in zip(f.grid.k, beta):
        if b:
            symbol = symbol * (1j * k) ** b
    return f.with_coeffs(f.coeffs * symbol)


def partial(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    beta = [0] * f.grid.d
    beta[axis] = order
    return derivative(f, beta)


def gradient(f: SpectralField) -> SpectralField:
    """Gradient of a scalar field (d components)."""
    if f.m != 1:
        raise ValueError("gradient expects a scalar field")
    return SpectralField(f.grid, np.stack([1j * k * f.coeffs[0] for k in f.grid.k]))


def divergence(u: SpectralField) -> SpectralField:
    if u.m != u.grid.d:
        raise ValueError("divergence expects d components")
    return SpectralField(u.grid, sum(1j * k * c for k, c in zip(u.grid.k, u.coeffs)))


def curl(u: SpectralField) -> SpectralField:
    """Scalar vorticity d1 u2 - d2 u1 in 2D, the usual vector curl in 3D."""
    if u.m != u.grid.d:
        raise ValueError("curl expects d components")
    k = u.grid.k
    c = u.coeffs
    if u.grid.d == 2:
        return SpectralField(u.grid, 1j * (k[0] * c[1] - k[1] * c[0]))
    return SpectralField(
        u.grid,
        np.stack(
            [
                1j * (k[1] * c[2] - k[2] * c[1]),
                1j * (k[2] * c[0] - k[0] * c[2]),
                1j * (k[0] * c[1] - k[1] * c[0]),
            ]
        ),
    )


def perp_gradient(a: SpectralField) -> SpectralField:
    """(d2 a, -d1 a), padded with a zero third component in 3D."""
    if a.m != 1:
        raise ValueError("perp_gradient expects a scalar field")
    k = a.grid.k
    comps = [1j * k[1] * a.coeffs[0], -1j * k[0] * a.coeffs[0]]
    if a.grid.d == 3:
        comps.append(np.zeros_like(a.coeffs[0]))
    return SpectralField(a.grid, np.stack(comps))


def laplacian(f: SpectralField) -> SpectralField:
    return f.with_coeffs(-f.grid.k2 * f.coeffs)


def inverse_laplacian(f: SpectralField) -> SpectralField:
    """(-Delta)^{-1}: divide by |xi|^2, zero mode set to 0.

    Emits ``ZeroModeWarning`` when the discarded mean exceeds 1e-10 of the
    field's spectral l^2 size.
    """
    k2 = f.grid.k2
    zero = k2 == 0
    scale = np.sqrt(np.sum(np.abs(f.coeffs) ** 2))
    dropped = np.max(np.abs(f.coeffs[:, zero]), initial=0.0)
    if scale > 0 and dropped > 1e-10 * scale:
        warnings.warn(
            f"inverse Laplacian dropped a zero mode of relative size {dropped / scale:.3e}",
            ZeroModeWarning,
            stacklevel=2,
        )
    inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, k2))
    return f.with_coeffs(f.coeffs * inv)


def leray_project(u: SpectralField) -> SpectralField:
    """u_hat -> u_hat - xi (xi . u_hat) / |xi|^2; the zero mode is untouched."""
    if u.m != u.grid.d:
        raise ValueError("Leray projection expects d components")
    return u.with_coeffs(_project(u.grid, u.coeffs))


def _project(grid: GridSpec, c: np.ndarray) -> np.ndarray:
    k2 = grid.k2
    inv = np.where(k2 == 0, 0.0, 1.0 / np.where(k2 == 0, 1.0, k2))
    kdotu = sum(k * ci for k, ci in zip(grid.k, c)) * inv
    return np.stack([ci - k * kdotu for k, ci in zip(grid.k, c)])


def dealias(f: SpectralField) -> SpectralField:
    return f.with_coeffs(f.coeffs * f.grid.dealias_mask)


def advect(u: SpectralField, w: SpectralField) -> SpectralField:
    """Dealiased u . grad w, componentwise when w is a vector field."""
    grid = u.grid
    _check_grid(grid, w)
    if u.m != grid.d:
        raise ValueError("advecting velocity must have d components")
    up = u.physical()
    axes = tuple(range(1, grid.d + 1))
    out = np.empty_like(w.coeffs)
    for c in range(w.m):
        grads = np.fft.irfftn(
            np.stack([1j * k * w.coeffs[c] for k in grid.k]) / grid.cell_volume,
            s=grid.shape,
            axes=axes,
        )
        prod = np.einsum("i...,i...->...", up, grads)
        out[c] = np.fft.rfftn(prod) * grid.cell_volume
    return SpectralField(grid, out * grid.dealias_mask)


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased pointwise product; a scalar factor broadcasts over components."""
    _check_grid(f.grid, g)
    if f.m != 1 and g.m != 1 and f.m != g.m:
        raise ValueError("component counts do not broadcast")
    prod = f.physical() * g.physical()
    return dealias(SpectralField.from_physical(f.grid, prod))


def resample(f: SpectralField, grid: GridSpec) -> SpectralField:
    """Copy the lattice coefficients of ``f`` onto another grid with the same box.

    Modes absent from the target grid are dropped, new modes are zero, and
    Nyquist modes (ambiguous in sign) are discarded.
    """
    if grid.L != f.grid.L or grid.d != f.grid.d:
        raise ValueError("resampling requires the same box")
    src, dst = [], []
    for i, (n_src, n_dst) in enumerate(zip(f.grid.N, grid.N)):
        kmax = min(n_src, n_dst) // 2
        if i == grid.d - 1:
            k = np.arange(kmax)
        else:
            k = np.arange(-kmax + 1, kmax)
        src.append(k % n_src if i < grid.d - 1 else k)
        dst.append(k % n_dst if i < grid.d - 1 else k)
    out = np.zeros((f.m,) + grid.spectral_shape, dtype=complex)
    out[(slice(None),) + np.ix_(*dst)] = f.coeffs[(slice(None),) + np.ix_(*src)]
    return SpectralField(grid, out)


# -- norms and inner products ---------------------------------------------


def l2_inner(f: SpectralField, g: SpectralField, weight: np.ndarray | None = None) -> float:
    """sum over components of the (weighted) L^2 inner product, via Parseval."""
    _check_grid(f.grid, g)
    if f.m != g.m:
        raise ValueError("inner product needs matching component counts")
    w = f.grid.multiplicity if weight is None else f.grid.multiplicity * weight
    s = np.sum(w * np.real(f.coeffs * np.conj(g.coeffs)))
    return float(s / f.grid.box_volume)


def hm_inner(f: SpectralField, g: SpectralField, m: int = 3) -> float:
    """sum_{|beta| <= m} integral D^beta f . D^beta g dx."""
    return l2_inner(f, g, f.grid.sobolev_weight(m))


def hm_norm(f: SpectralField, m: int = 3) -> float:
    if m > 4:
        raise ValueError("H^m norms are supported for m <= 4")
    return math.sqrt(max(hm_inner(f, f, m), 0.0))


def _pointwise_magnitude(f: SpectralField) -> np.ndarray:
    p = f.physical()
    if f.m == 1:
        return np.abs(p[0])
    return np.sqrt(np.sum(p**2, axis=0))


def lp_norm(f: SpectralField, p: float) -> float:
    """Physical-space quadrature of the pointwise Euclidean magnitude."""
    if math.isinf(p):
        return linf_norm(f)
    mag = _pointwise_magnitude(f)
    scale = mag.max(initial=0.0)
    if scale == 0:
        return 0.0
    return float(scale * (f.grid.cell_volume * np.sum((mag / scale) ** p)) ** (1.0 / p))


def linf_norm(f: SpectralField) -> float:
    return float(_pointwise_magnitude(f).max(initial=0.0))


def fourier_l1_norm(f: SpectralField) -> float:
    """Riemann sum for integral |f_hat(xi)| d xi."""
    mag = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))
    return float(np.sum(f.grid.multiplicity * mag) * f.grid.lattice_cell)


def norm(f: SpectralField, kind: str, p: float | None = None, m: int | None = None) -> float:
    """Dispatch on ``kind`` in {"Lp", "Linf", "Hm", "FourierL1"}.

    Shorthands like ``"L2"`` or ``"H3"`` are accepted too.
    """
    if kind == "Linf":
        return linf_norm(f)
    if kind == "FourierL1":
        return fourier_l1_norm(f)
    if kind == "Lp":
        if p is None:
            raise ValueError("Lp norm needs p")
        return lp_norm(f, p)
    if kind == "Hm":
        if m is None:
            raise ValueError("Hm norm needs m")
        return hm_norm(f, m)
    if kind[0] == "L" and kind[1:].isdigit():
        return lp_norm(f, float(kind[1:]))
    if kind[0] == "H" and kind[1:].isdigit():
        return hm_norm(f, int(kind[1:]))
    raise ValueError(f"unknown norm kind {kind!r}")


# -- random fields --------------------------------------------------------


def random_band_limited(
    grid: GridSpec,
    kmax: float,
    rng: np.random.Generator,
    m: int = 1,
    kmin: float = 0.0,
) -> SpectralField:
    """Real random field with coefficients supported in kmin <= |xi| <= kmax.

    The zero mode is excluded, so the field is mean-free.
    """
    shape = (m,) + grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    r = grid.xi_mag
    keep = (r <= kmax) & (r >= kmin) & (r > 0) & grid.dealias_mask
    c = c * keep
    # projecting through physical space enforces Hermitian symmetry
    f = transform_roundtrip(SpectralField(grid, c))
    return f.with_coeffs(f.coeffs * keep)


# -- snapshots ------------------------------------------------------------


def save_field(path: str | Path, f: SpectralField, name: str = "") -> None:
    """Write a self-describing ``.npz`` snapshot (layout documented in README)."""
    np.savez(
        path,
        format=np.array(FORMAT_NAME),
        version=np.array(FORMAT_VERSION),
        name=np.array(name),
        d=np.array(f.grid.d),
        L=np.array(f.grid.L, dtype=float),
        N=np.array(f.grid.N, dtype=np.int64),
        dealias_fraction=np.array(f.grid.dealias_fraction),
        layout=np.array("rfftn"),
        coeffs=f.coeffs,
    )


def load_field(path: str | Path) -> SpectralField:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != FORMAT_NAME:
            raise ValueError(f"{path}: not a field snapshot")
        if int(data["version"]) > FORMAT_VERSION:
            raise ValueError(f"{path}: snapshot version {int(data['version'])} is newer than supported")
        grid = GridSpec(
            d=int(data["d"]),
            L=tuple(float(x) for x in data["L"]),
            N=tuple(int(x) for x in data["N"]),
            dealias_fraction=float(data["dealias_fraction"]),
        )
        return SpectralField(grid, np.array(data["coeffs"]))


def embed_scalar_as_vector(grid: GridSpec, f: SpectralField, axis: int) -> SpectralField:
    """Vector field with ``f`` in component ``axis`` and zeros elsewhere."""
    c = np.zeros((grid.d,) + grid.spectral_shape, dtype=complex)
    c[axis] = f.coeffs[0]
    return SpectralField(grid, c)


def fields_close(a: SpectralField, b: SpectralField) -> float:
    """Relative spectral l^2 distance between two fields."""
    num = np.sqrt(np.sum(np.abs(a.coeffs - b.coeffs) ** 2))
    den = max(np.sqrt(np.sum(np.abs(a.coeffs) ** 2)), np.sqrt(np.sum(np.abs(b.coeffs) ** 2)))
    return float(num / den) if den > 0 else float(num)


__all__ = [
    "GridSpec",
    "SpectralField",
    "ZeroModeWarning",
    "ShellTruncationWarning",
    "advect",
    "curl",
    "dealias",
    "derivative",
    "divergence",
    "embed_scalar_as_vector",
    "fields_close",
    "fourier_l1_norm",
    "gradient",
    "hm_inner",
    "hm_norm",
    "inverse_laplacian",
    "l2_inner",
    "laplacian",
    "leray_project",
    "linf_norm",
    "load_field",
    "lp_norm",
    "multi_indices",
    "multiply",
    "norm",
    "partial",
    "perp_gradient",
    "random_band_limited",
    "resample",
    "save_field",
    "transform_roundtrip",
]
