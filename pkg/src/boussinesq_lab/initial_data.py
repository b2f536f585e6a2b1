"""Large initial data with wedge-annulus Fourier support.

The data profiles (``profile_chi`` for the horizontal wedge-annulus factor,
``profile_phi`` for the vertical band in 3D) are unrelated to the
Littlewood-Paley ``lp_chi`` even though both reuse the same smoothstep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import (
    GridSpec,
    SpectralField,
    divergence,
    fourier_l1_norm,
    hm_norm,
    leray_project,
    linf_norm,
    lp_norm,
    perp_gradient,
    random_band_limited,
)
from .littlewood_paley import besov_norm, ramp

# annulus C = {4/3 <= |xi| <= 3/2}
ANNULUS = (4.0 / 3.0, 3.0 / 2.0)
# 2D support radii / flat radii
RADII_2D = (4.0 / 3.0, 25.0 / 18.0, 13.0 / 9.0, 3.0 / 2.0)
# 3D horizontal support / flat radii; the flat radii reuse the 2D ones
RADII_3D = (41.0 / 30.0, 25.0 / 18.0, 13.0 / 9.0, 22.0 / 15.0)


def loglog(eps: float) -> float:
    return math.log(math.log(1.0 / eps))


def amplitude_2d(eps: float) -> float:
    """eps^-1 (log log 1/eps)^(1/2); defined for eps < 1/e."""
    if not 0 < eps < math.exp(-1):
        raise ValueError(f"amplitude law needs 0 < eps < 1/e, got {eps}")
    return math.sqrt(loglog(eps)) / eps


def amplitude_3d(eps: float, p: float) -> float:
    """eps^(-2(p-1)/p) (log log 1/eps)^(1/2)."""
    if not 0 < eps < math.exp(-1):
        raise ValueError(f"amplitude law needs 0 < eps < 1/e, got {eps}")
    return eps ** (-2.0 * (p - 1.0) / p) * math.sqrt(loglog(eps))


@dataclass(frozen=True)
class DataParams2D:
    """Wedge half-width ``epsilon``; ``amplitude=None`` selects the amplitude law."""

    epsilon: float
    amplitude: float | None = None
    transition_order: int = 1

    def __post_init__(self):
        if not 0 < self.epsilon <= 0.5:
            raise ValueError(f"epsilon must lie in (0, 1/2], got {self.epsilon}")
        if self.amplitude is None:
            amplitude_2d(self.epsilon)
        elif not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def amp(self) -> float:
        return amplitude_2d(self.epsilon) if self.amplitude is None else float(self.amplitude)


@dataclass(frozen=True)
class DataParams3D:
    epsilon: float
    p: float = 2.0
    amplitude: float | None = None
    transition_order: int = 1

    def __post_init__(self):
        if not 0 < self.epsilon <= 0.15:
            raise ValueError(f"3D data needs 0 < epsilon <= 0.15, got {self.epsilon}")
        if not 1 < self.p < math.inf:
            raise ValueError("p must lie in (1, inf)")
        # support must stay inside the annulus C
        if math.hypot(RADII_3D[3], 2 * self.epsilon) > ANNULUS[1]:
            raise ValueError("epsilon too large: support leaves the annulus")
        if self.amplitude is None:
            amplitude_3d(self.epsilon, self.p)
        elif not self.amplitude > 0:
            raise ValueError("amplitude must be positive")

    @property
    def amp(self) -> float:
        if self.amplitude is None:
            return amplitude_3d(self.epsilon, self.p)
        return float(self.amplitude)


def bump(x, support, order: int = 1):
    """Flat-topped bump: 0 outside [a0, b0], 1 on [a1, b1]; support=(a0, a1, b1, b0)."""
    a0, a1, b1, b0 = support
    return ramp(x, a0, a1, order) * (1.0 - ramp(x, b1, b0, order))


def profile_chi(xi1, xi2, eps: float, radii=RADII_2D, order: int = 1):
    """Wedge-annulus profile: support |xi1 - xi2| <= eps, flat for <= eps/2."""
    r = np.sqrt(xi1**2 + xi2**2)
    wedge = 1.0 - ramp(np.abs(xi1 - xi2), eps / 2.0, eps, order)
    return wedge * bump(r, radii, order)


def profile_phi(xi3, eps: float, order: int = 1):
    """Vertical band profile: support |xi3| in [eps, 2 eps], flat on [5eps/4, 7eps/4]."""
    return bump(np.abs(xi3), (eps, 1.25 * eps, 1.75 * eps, 2.0 * eps), order)


def _check_resolution(grid: GridSpec, eps: float, axes) -> None:
    for i in axes:
        if 1.0 / grid.L[i] > eps / 4.0 * (1 + 1e-12):
            raise ValueError(
                f"lattice spacing 1/L = {1 / grid.L[i]:.4g} on axis {i} does not resolve "
                f"epsilon = {eps} (need L >= {4 / eps:.4g})"
            )


def _check_support_fits(grid: GridSpec, coeffs: np.ndarray) -> None:
    support = np.abs(coeffs) > 0
    outside = support & ~grid.dealias_mask
    if np.any(outside):
        raise ValueError("grid too coarse: data support exceeds the dealiasing mask")


def build_a0_2d(params: DataParams2D, grid: GridSpec) -> SpectralField:
    """Scalar a0 with a0_hat = amplitude * profile_chi (real, even, so a0 is real)."""
    if grid.d != 2:
        raise ValueError("build_a0_2d needs a 2D grid")
    _check_resolution(grid, params.epsilon, (0, 1))
    xi1, xi2 = grid.xi
    coeffs = params.amp * profile_chi(xi1, xi2, params.epsilon, RADII_2D, params.transition_order)
    _check_support_fits(grid, coeffs)
    return SpectralField(grid, coeffs.astype(complex))


def build_a0_3d(params: DataParams3D, grid: GridSpec) -> SpectralField:
    """a0_hat = amplitude * profile_chi(xi_h) * profile_phi(|xi3|)."""
    if grid.d != 3:
        raise ValueError("build_a0_3d needs a 3D grid")
    _check_resolution(grid, params.epsilon, (0, 1, 2))
    xi1, xi2, xi3 = grid.xi
    order = params.transition_order
    coeffs = (
        params.amp
        * profile_chi(xi1, xi2, params.epsilon, RADII_3D, order)
        * profile_phi(xi3, params.epsilon, order)
    )
    _check_support_fits(grid, coeffs)
    return SpectralField(grid, coeffs.astype(complex))


def full_lattice_profile(grid: GridSpec, eps: float, order: int = 1) -> np.ndarray:
    """The 2D/3D profile on the full (not half) lattice, for reality checks via ifftn."""
    idx = [np.fft.fftfreq(n, 1.0 / n) / ell for n, ell in zip(grid.N, grid.L)]
    mesh = np.meshgrid(*idx, indexing="ij")
    if grid.d == 2:
        return profile_chi(mesh[0], mesh[1], eps, RADII_2D, order)
    return profile_chi(mesh[0], mesh[1], eps, RADII_3D, order) * profile_phi(mesh[2], eps, order)


def make_linear_data(a0: SpectralField) -> tuple[SpectralField, SpectralField]:
    """U0 = (d2 a0, -d1 a0[, 0]) and Theta0 = a0."""
    return perp_gradient(a0), a0


def default_grid(d: int, eps: float, refine: int = 1, points_per_unit: float = 8.0) -> GridSpec:
    """Desk-scale grid for the data at ``eps``.

    2D: isotropic L = ceil(4/eps) * refine and N ~ points_per_unit * L.
    3D: L = 4/eps on every axis; the vertical axis only needs to carry
    products of the thin band |xi3| <= 2 eps, so it gets far fewer points.
    """
    if d == 2:
        L = math.ceil(4.0 / eps) * refine
        N = 2 * math.ceil(points_per_unit * L / 2)
        return GridSpec(2, L, N)
    L = 4.0 / eps * refine
    # mask cutoff N / (3L) must cover twice the per-axis data extent
    n_h = 2 * math.ceil(3.0 * 2.3 * L / 2)
    n_v = max(8, 2 * math.ceil(1.05 * 12.0 * eps * L / 2))
    return GridSpec(3, (L, L, L), (n_h, n_h, n_v))


def random_perturbation(
    grid: GridSpec, h3_norm: float, rng: np.random.Generator, kmax: float = 2.0
) -> tuple[SpectralField, SpectralField]:
    """Divergence-free v0 and scalar th0, each scaled to the target H^3 norm."""
    if h3_norm == 0:
        return SpectralField.zeros(grid, grid.d), SpectralField.zeros(grid, 1)
    v = leray_project(random_band_limited(grid, kmax, rng, m=grid.d))
    th = random_band_limited(grid, kmax, rng, m=1)
    return v * (h3_norm / hm_norm(v, 3)), th * (h3_norm / hm_norm(th, 3))


@dataclass
class LargenessReport:
    u_linf: float
    theta_linf: float
    u_lp: float
    theta_lp: float
    u_h3: float
    theta_h3: float
    a0_hat_l1: float
    a0_l2: float
    div_u: float
    besov: dict

    def as_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "besov"}
        for (s, p, r), (bu, bt) in self.besov.items():
            tag = f"s{s:g}_p{p:g}_r{r:g}"
            out[f"u_besov_{tag}"] = bu
            out[f"theta_besov_{tag}"] = bt
        return out


def largeness_report(
    u0: SpectralField,
    theta0: SpectralField,
    p: float = 2.0,
    besov_params=((3.0, 2.0, 2.0), (0.0, math.inf, 1.0)),
) -> LargenessReport:
    """Norms showing the data is not small."""
    besov = {
        (s, pp, r): (besov_norm(u0, s, pp, r), besov_norm(theta0, s, pp, r))
        for s, pp, r in besov_params
    }
    return LargenessReport(
        u_linf=linf_norm(u0),
        theta_linf=linf_norm(theta0),
        u_lp=lp_norm(u0, p),
        theta_lp=lp_norm(theta0, p),
        u_h3=hm_norm(u0, 3),
        theta_h3=hm_norm(theta0, 3),
        a0_hat_l1=fourier_l1_norm(theta0),
        a0_l2=lp_norm(theta0, 2.0),
        div_u=float(np.max(np.abs(divergence(u0).physical()))),
        besov=besov,
    )
