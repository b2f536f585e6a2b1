"""Closed-form solution of the linear damped Boussinesq system.

With alpha(t) = exp(-nu t) and beta(t) = (exp(-lam t) - exp(-nu t)) / (nu - lam)
(beta = t exp(-nu t) when nu == lam) the solution is::

    Theta(t) = exp(-lam t) Theta0
    U(t)     = alpha(t) U0 + beta(t) V0,   V0 = P(Theta0 e_d)
    W(t)     = alpha(t) W0 + beta(t) curl V0

where P is the Leray projector.  Everything nonlinear in the flow (the
forcing terms U.grad U and U.grad Theta) is then a fixed combination of a
handful of time-independent products, which makes E0 a one-dimensional
integral of quadratic forms.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .fields import (
    SpectralField,
    advect,
    curl,
    hm_inner,
    hm_norm,
    inverse_laplacian,
    linf_norm,
    partial,
    perp_gradient,
)

log = logging.getLogger(__name__)

EQUAL_RATES_RTOL = 1e-8


def _equal_rates(nu: float, lam: float) -> bool:
    return abs(nu - lam) < EQUAL_RATES_RTOL * max(abs(nu), abs(lam), 1e-300)


def alpha_coefficient(t, nu: float):
    return np.exp(-nu * np.asarray(t, dtype=float))


def beta_coefficient(t, nu: float, lam: float):
    """(exp(-lam t) - exp(-nu t)) / (nu - lam), continuous across nu == lam.

    Written as t exp(-m t) sinh(x)/x with m = (nu + lam)/2, x = (nu - lam) t / 2,
    which has no cancellation for nearby rates; for |x| > 1 the direct
    difference is used instead (no cancellation there, no overflow).
    """
    t = np.asarray(t, dtype=float)
    m = 0.5 * (nu + lam)
    if _equal_rates(nu, lam):
        return t * np.exp(-m * t)
    delta = nu - lam
    x = 0.5 * delta * t
    small = np.abs(x) <= 1.0
    xs = np.where(small, x, 1.0)
    near = t * np.exp(-m * t) * np.where(xs == 0, 1.0, np.sinh(xs) / np.where(xs == 0, 1.0, xs))
    far = (np.exp(-lam * t) - np.exp(-nu * t)) / delta
    return np.where(small, near, far)


# -- closed-form time integrals over [a, inf) -------------------------------


def _moment(n: int, c: float, a: float) -> float:
    """integral_a^inf t^n exp(-c t) dt."""
    if a == 0:
        return math.factorial(n) / c ** (n + 1)
    return float(special.gamma(n + 1) * special.gammaincc(n + 1, c * a) / c ** (n + 1))


def _sh_integral(c: float, delta: float, a: float) -> float:
    """integral_a^inf exp(-c t) sh(t) dt with sh(t) = 2 sinh(delta t / 2) / delta."""
    if abs(delta) < 0.1 * c:
        total, k = 0.0, 0
        while k < 40:
            term = (0.5 * delta) ** (2 * k) / math.factorial(2 * k + 1) * _moment(2 * k + 1, c, a)
            total += term
            if abs(term) <= 1e-17 * abs(total):
                break
            k += 1
        return total
    return (_moment(0, c - 0.5 * delta, a) - _moment(0, c + 0.5 * delta, a)) / delta


def _sh2_integral(c: float, delta: float, a: float) -> float:
    """integral_a^inf exp(-c t) sh(t)^2 dt."""
    if abs(delta) < 0.1 * c:
        total, j = 0.0, 0
        while j < 40:
            term = 2.0 * delta ** (2 * j) / math.factorial(2 * j + 2) * _moment(2 * j + 2, c, a)
            total += term
            if abs(term) <= 1e-17 * abs(total):
                break
            j += 1
        return total
    return (
        _moment(0, c - delta, a) + _moment(0, c + delta, a) - 2.0 * _moment(0, c, a)
    ) / delta**2


@dataclass(frozen=True)
class TimeIntegrals:
    """Closed-form integrals over [a, inf) of the coefficient products."""

    alpha: float
    beta: float
    theta: float  # exp(-lam t)
    alpha2: float
    alpha_beta: float
    beta2: float
    alpha_theta: float
    beta_theta: float


def time_integrals(nu: float, lam: float, a: float = 0.0) -> TimeIntegrals:
    m = 0.5 * (nu + lam)
    delta = 0.0 if _equal_rates(nu, lam) else nu - lam
    # beta(t) = exp(-m t) sh(t)
    return TimeIntegrals(
        alpha=_moment(0, nu, a),
        beta=_sh_integral(m, delta, a),
        theta=_moment(0, lam, a),
        alpha2=_moment(0, 2 * nu, a),
        alpha_beta=_sh_integral(nu + m, delta, a),
        beta2=_sh2_integral(2 * m, delta, a),
        alpha_theta=_moment(0, nu + lam, a),
        beta_theta=_sh_integral(lam + m, delta, a),
    )


# -- the flow -------------------------------------------------------------


def buoyancy_response(theta0: SpectralField) -> SpectralField:
    """V0: the velocity direction fed by Theta0 e_d.

    2D: (-Delta)^-1 grad_perp d1 Theta0.
    3D: (-Delta)^-1 (d1 d3 Theta0, d2 d3 Theta0, -(d1^2 + d2^2) Theta0).
    """
    if theta0.grid.d == 2:
        return inverse_laplacian(perp_gradient(partial(theta0, 0)))
    d13 = partial(partial(theta0, 0), 2)
    d23 = partial(partial(theta0, 1), 2)
    dhh = partial(theta0, 0, 2) + partial(theta0, 1, 2)
    return inverse_laplacian(SpectralField.stack([d13, d23, -dhh]))


def vorticity_driver(theta0: SpectralField) -> SpectralField:
    """d1 Theta0 in 2D, (d2 Theta0, -d1 Theta0, 0) in 3D."""
    if theta0.grid.d == 2:
        return partial(theta0, 0)
    return perp_gradient(theta0)


@dataclass(frozen=True, eq=False)
class LinearFlow:
    nu: float
    lam: float
    U0: SpectralField
    Theta0: SpectralField
    W0: SpectralField
    V0: SpectralField
    driver: SpectralField

    @classmethod
    def from_initial(cls, U0: SpectralField, Theta0: SpectralField, nu: float, lam: float) -> "LinearFlow":
        if not (nu > 0 and lam > 0):
            raise ValueError("damping rates must be positive")
        return cls(
            nu=float(nu),
            lam=float(lam),
            U0=U0,
            Theta0=Theta0,
            W0=curl(U0),
            V0=buoyancy_response(Theta0),
            driver=vorticity_driver(Theta0),
        )

    @property
    def d(self) -> int:
        return self.U0.grid.d

    @property
    def grid(self):
        return self.U0.grid

    def alpha(self, t):
        return alpha_coefficient(t, self.nu)

    def beta(self, t):
        return beta_coefficient(t, self.nu, self.lam)

    def theta_at(self, t: float) -> SpectralField:
        return self.Theta0 * math.exp(-self.lam * t)

    def velocity_at(self, t: float) -> SpectralField:
        return self.U0 * float(self.alpha(t)) + self.V0 * float(self.beta(t))

    def vorticity_at(self, t: float) -> SpectralField:
        return self.W0 * float(self.alpha(t)) + self.driver * float(self.beta(t))

    def forcing_at(self, t: float) -> tuple[SpectralField, SpectralField]:
        """(f, g) = (-U.grad U, -U.grad Theta), dealiased."""
        U = self.velocity_at(t)
        return -advect(U, U), -advect(U, self.theta_at(t))

    # -- time-independent products -----------------------------------------
    @cached_property
    def products(self) -> dict[str, SpectralField]:
        """U.grad U = a^2 P_uu + a b P_cross + b^2 P_vv;
        U.grad Theta = e^{-lam t} (a G_u + b G_v)."""
        U0, V0, T0 = self.U0, self.V0, self.Theta0
        return {
            "uu": advect(U0, U0),
            "cross": advect(U0, V0) + advect(V0, U0),
            "vv": advect(V0, V0),
            "gu": advect(U0, T0),
            "gv": advect(V0, T0),
        }

    @cached_property
    def gram(self) -> tuple[np.ndarray, np.ndarray]:
        """H^3 Gram matrices of (uu, cross, vv) and (gu, gv)."""
        p = self.products
        f_terms = [p["uu"], p["cross"], p["vv"]]
        g_terms = [p["gu"], p["gv"]]
        gf = np.array([[hm_inner(a, b, 3) for b in f_terms] for a in f_terms])
        gg = np.array([[hm_inner(a, b, 3) for b in g_terms] for a in g_terms])
        return gf, gg

    @cached_property
    def product_norms(self) -> dict[str, float]:
        return {k: hm_norm(v, 3) for k, v in self.products.items()}

    @cached_property
    def _linf_parts(self):
        u0 = self.U0.physical()
        v0 = self.V0.physical()
        return (
            np.sum(u0 * u0, axis=0).ravel(),
            np.sum(u0 * v0, axis=0).ravel(),
            np.sum(v0 * v0, axis=0).ravel(),
            linf_norm(self.Theta0),
        )

    def forcing_norms(self, t: float) -> tuple[float, float]:
        """(||U.grad U||_H3, ||U.grad Theta||_H3) from the Gram matrices."""
        a, b = float(self.alpha(t)), float(self.beta(t))
        e = math.exp(-self.lam * t)
        gf, gg = self.gram
        x = np.array([a * a, a * b, b * b])
        y = np.array([a * e, b * e])
        return math.sqrt(max(x @ gf @ x, 0.0)), math.sqrt(max(y @ gg @ y, 0.0))

    def sup_norm(self, t: float) -> float:
        """||U(t)||_Linf + ||Theta(t)||_Linf."""
        a, b = float(self.alpha(t)), float(self.beta(t))
        uu, uv, vv, th = self._linf_parts
        u = math.sqrt(max(float(np.max(a * a * uu + 2 * a * b * uv + b * b * vv)), 0.0))
        return u + math.exp(-self.lam * t) * th

    def envelopes(self, t):
        """Triangle-inequality upper envelopes of the E0 and F0 integrands."""
        t = np.asarray(t, dtype=float)
        a, b, e = self.alpha(t), self.beta(t), np.exp(-self.lam * t)
        n = self.product_norms
        env_e = a * a * n["uu"] + a * b * n["cross"] + b * b * n["vv"] + a * e * n["gu"] + b * e * n["gv"]
        env_f = a * linf_norm(self.U0) + b * linf_norm(self.V0) + e * linf_norm(self.Theta0)
        return env_e, env_f

    def bound_integrals(self, a: float = 0.0) -> tuple[float, float]:
        """Closed-form integrals of the envelopes over [a, inf)."""
        ti = time_integrals(self.nu, self.lam, a)
        n = self.product_norms
        e0 = (
            ti.alpha2 * n["uu"]
            + ti.alpha_beta * n["cross"]
            + ti.beta2 * n["vv"]
            + ti.alpha_theta * n["gu"]
            + ti.beta_theta * n["gv"]
        )
        f0 = ti.alpha * linf_norm(self.U0) + ti.beta * linf_norm(self.V0) + ti.theta * linf_norm(self.Theta0)
        return e0, f0


@dataclass
class E0F0:
    mode: str
    E0: float
    F0: float
    E0_error: float = 0.0
    F0_error: float = 0.0
    t_stop: float = math.inf
    converged: bool = True


def _truncation_time(flow: LinearFlow, tol: float, t_max: float) -> float:
    ts = np.linspace(0.0, t_max, 4001)
    env_e, env_f = flow.envelopes(ts)
    stop = 0.0
    for env in (env_e, env_f):
        peak = env.max()
        if peak == 0:
            continue
        above = np.nonzero(env >= tol * peak)[0]
        stop = max(stop, ts[min(above[-1] + 1, ts.size - 1)])
    return float(stop) if stop > 0 else t_max


def compute_e0_f0(
    flow: LinearFlow, mode: str = "quadrature", tol: float = 1e-10, t_max: float | None = None
) -> E0F0:
    """E0 = int_0^inf ||U.grad U||_H3 + ||U.grad Theta||_H3 dt, F0 = int_0^inf ||(U, Theta)||_Linf dt.

    mode="quadrature" integrates the exact instantaneous norms adaptively
    (QUADPACK Gauss-Kronrod) up to the time where the envelopes drop below
    ``tol`` of their peak, and reports the analytic tail bound plus the
    quadrature error estimate as the error bar.  mode="bound" returns the
    triangle-inequality bound with closed-form time integrals.
    """
    if mode == "bound":
        e0, f0 = flow.bound_integrals()
        return E0F0("bound", e0, f0)
    if mode != "quadrature":
        raise ValueError(f"unknown mode {mode!r}")
    if t_max is None:
        t_max = 40.0 / min(flow.nu, flow.lam)
    t_stop = _truncation_time(flow, tol, t_max)
    tail_e, tail_f = flow.bound_integrals(t_stop)
    # a few breakpoints keep QUADPACK from skipping the early transient
    scale = 1.0 / min(flow.nu, flow.lam)
    points = [p for p in (0.5 * scale, 2 * scale, 8 * scale) if p < t_stop]

    epsrel = max(tol, 1e-13)

    def run(fn):
        # the sup norm is only piecewise smooth in t (the maximiser jumps between
        # grid points), which can trigger QUADPACK roundoff warnings even when the
        # error estimate is tiny; convergence is judged on the estimate itself
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(fn, 0.0, t_stop, epsabs=0.0, epsrel=epsrel, limit=400, points=points)
        return val, err, err <= 10 * epsrel * abs(val)

    e_val, e_err, e_ok = run(lambda t: sum(flow.forcing_norms(t)))
    f_val, f_err, f_ok = run(flow.sup_norm)
    if not (e_ok and f_ok):
        log.warning("E0/F0 quadrature did not converge: errors %.3e, %.3e", e_err, f_err)
    return E0F0(
        "quadrature",
        e_val,
        f_val,
        E0_error=e_err + tail_e,
        F0_error=f_err + tail_f,
        t_stop=t_stop,
        converged=e_ok and f_ok,
    )
