"""Pseudo-spectral time integration of the damped Boussinesq system.

The linear part (damping plus the buoyancy coupling P(theta e_d)) is
propagated exactly in Fourier space; the advective terms go through a
Lawson-type integrating-factor RK4.  Because the exact propagator maps the
linear flow onto itself, a run of the full system from U0 + v0 and a run of
the perturbation system from v0 produce the same iterates up to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .fields import GridSpec, SpectralField, _project, hm_norm
from .linear_flow import LinearFlow, alpha_coefficient, beta_coefficient


class CFLViolation(ValueError):
    def __init__(self, dt: float, suggested: float):
        super().__init__(f"dt = {dt:.4g} violates the CFL limit; use dt <= {suggested:.4g}")
        self.dt = dt
        self.suggested_dt = suggested


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.

    ``dt=None`` selects CFL-adaptive steps capped by ``dt_max``.  ``stride``
    is the number of steps between observer calls.  Zero damping rates are
    accepted by the integrator (the decay analysis assumes positive rates).
    """

    nu: float
    lam: float
    t_end: float
    cfl: float = 0.4
    stride: int = 1
    dt: float | None = None
    dt_max: float = 0.05
    mode: str = "full"
    nonlinear: bool = True
    blowup_factor: float = 1e6

    def __post_init__(self):
        if self.nu < 0 or self.lam < 0:
            raise ValueError("damping rates must be non-negative")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.mode not in ("full", "perturbation"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, eq=False)
class SimState:
    """Time plus (u, theta); in perturbation mode these hold (v, vartheta)."""

    t: float
    u: SpectralField
    theta: SpectralField

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    def pack(self) -> np.ndarray:
        return np.concatenate([self.u.coeffs, self.theta.coeffs], axis=0)

    @classmethod
    def unpack(cls, grid: GridSpec, t: float, y: np.ndarray) -> "SimState":
        return cls(t, SpectralField(grid, y[: grid.d]), SpectralField(grid, y[grid.d :]))


class Integrator:
    """Precomputed operators for one (grid, rates, mode) combination."""

    def __init__(
        self,
        grid: GridSpec,
        nu: float,
        lam: float,
        mode: str = "full",
        flow: LinearFlow | None = None,
        nonlinear: bool = True,
    ):
        if mode == "perturbation" and flow is None:
            raise ValueError("perturbation mode needs the linear flow")
        self.grid = grid
        self.nu = float(nu)
        self.lam = float(lam)
        self.mode = mode
        self.flow = flow
        self.nonlinear = nonlinear
        d = grid.d
        e_d = np.zeros((d,) + grid.spectral_shape, dtype=complex)
        e_d[d - 1] = 1.0
        self._buoyancy = _project(grid, e_d)  # P e_d per mode
        self._axes = tuple(range(1, d + 1))
        self._ik = [1j * k for k in grid.k]
        self._mask = grid.dealias_mask
        if mode == "perturbation":
            self._background = self._background_fields(flow)

    # -- transforms ------------------------------------------------------
    def _to_phys(self, c):
        return np.fft.irfftn(c / self.grid.cell_volume, s=self.grid.shape, axes=self._axes)

    def _to_spec(self, p):
        return np.fft.rfftn(p, axes=self._axes) * self.grid.cell_volume

    def _background_fields(self, flow: LinearFlow):
        def phys_and_grad(f: SpectralField):
            grads = np.stack([ik * f.coeffs for ik in self._ik], axis=1)  # (m, d, ...)
            return self._to_phys(f.coeffs), self._to_phys(grads.reshape((-1,) + grads.shape[2:])).reshape(grads.shape[:2] + self.grid.shape)

        return {
            "U0": phys_and_grad(flow.U0),
            "V0": phys_and_grad(flow.V0),
            "T0": phys_and_grad(flow.Theta0),
        }

    def background(self, t: float):
        """Physical U(t), grad U(t), Theta(t), grad Theta(t)."""
        a = float(alpha_coefficient(t, self.flow.nu))
        b = float(beta_coefficient(t, self.flow.nu, self.flow.lam))
        e = math.exp(-self.flow.lam * t)
        (u0, gu0), (v0, gv0), (t0, gt0) = (self._background[k] for k in ("U0", "V0", "T0"))
        return a * u0 + b * v0, a * gu0 + b * gv0, e * t0[0], e * gt0[0]

    # -- linear propagator -------------------------------------------------
    def propagate(self, y: np.ndarray, h: float) -> np.ndarray:
        """exp(L h) y for L(u, theta) = (-nu u + P(theta e_d), -lam theta)."""
        d = self.grid.d
        out = np.empty_like(y)
        theta = y[d]
        out[:d] = math.exp(-self.nu * h) * y[:d] + float(beta_coefficient(h, self.nu, self.lam)) * self._buoyancy * theta
        out[d] = math.exp(-self.lam * h) * theta
        return out

    def linear_tendency(self, y: np.ndarray) -> np.ndarray:
        d = self.grid.d
        out = np.empty_like(y)
        out[:d] = -self.nu * y[:d] + self._buoyancy * y[d]
        out[d] = -self.lam * y[d]
        return out

    # -- advective part ----------------------------------------------------
    def nonlinear_tendency(self, t: float, y: np.ndarray) -> np.ndarray:
        """Projected, dealiased advection of the total fields.

        Full mode: (P(-u.grad u), -u.grad theta).  Perturbation mode: the same
        expression for u = U(t) + v, theta = Theta(t) + vartheta, which equals
        the sum of the homogeneous perturbation terms and the forcing (f, g).
        """
        d = self.grid.d
        if not self.nonlinear:
            return np.zeros_like(y)
        u = self._to_phys(y[:d])
        grads = self._to_phys(np.stack([ik * y[c] for c in range(d + 1) for ik in self._ik]))
        grads = grads.reshape((d + 1, d) + self.grid.shape)
        gu, gth = grads[:d], grads[d]
        if self.mode == "perturbation":
            U, gU, _, gT = self.background(t)
            u = u + U
            gu = gu + gU
            gth = gth + gT
        adv = np.empty((d + 1,) + self.grid.shape)
        for c in range(d):
            adv[c] = np.einsum("j...,j...->...", u, gu[c])
        adv[d] = np.einsum("j...,j...->...", u, gth)
        out = -self._to_spec(adv) * self._mask
        out[:d] = _project(self.grid, out[:d])
        return out

    def tendency(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.linear_tendency(y) + self.nonlinear_tendency(t, y)

    # -- stepping ----------------------------------------------------------
    def lawson_rk4(self, t: float, y: np.ndarray, h: float) -> np.ndarray:
        E = self.propagate
        k1 = self.nonlinear_tendency(t, y)
        k2 = self.nonlinear_tendency(t + h / 2, E(y + h / 2 * k1, h / 2))
        ey_half = E(y, h / 2)
        k3 = self.nonlinear_tendency(t + h / 2, ey_half + h / 2 * k2)
        k4 = self.nonlinear_tendency(t + h, E(ey_half, h / 2) + h * E(k3, h / 2))
        y_new = E(y, h) + h / 6 * (E(k1, h) + 2 * E(k2 + k3, h / 2) + k4)
        y_new[: self.grid.d] = _project(self.grid, y_new[: self.grid.d])
        return y_new

    def max_speed(self, t: float, y: np.ndarray) -> float:
        u = self._to_phys(y[: self.grid.d])
        if self.mode == "perturbation":
            u = u + self.background(t)[0]
        return float(np.sqrt(np.max(np.sum(u * u, axis=0))))

    def cfl_dt(self, t: float, y: np.ndarray, cfl: float) -> float:
        speed = self.max_speed(t, y)
        return math.inf if speed == 0 else cfl * min(self.grid.dx) / speed


def _integrator_for(config: SimConfig, grid: GridSpec, flow: LinearFlow | None) -> Integrator:
    return Integrator(grid, config.nu, config.lam, config.mode, flow, config.nonlinear)


def rhs_full(state: SimState, nu: float, lam: float) -> tuple[SpectralField, SpectralField]:
    """du/dt = P(-u.grad u + theta e_d) - nu u,  dtheta/dt = -u.grad theta - lam theta."""
    integ = Integrator(state.grid, nu, lam, "full")
    return _split(state.grid, integ.tendency(state.t, state.pack()))


def rhs_perturbation(
    v: SpectralField, vartheta: SpectralField, t: float, flow: LinearFlow
) -> tuple[SpectralField, SpectralField]:
    """Tendency of the perturbation system around the linear flow."""
    integ = Integrator(v.grid, flow.nu, flow.lam, "perturbation", flow)
    y = np.concatenate([v.coeffs, vartheta.coeffs])
    return _split(v.grid, integ.tendency(t, y))


def _split(grid, y):
    return SpectralField(grid, y[: grid.d]), SpectralField(grid, y[grid.d :])


def step(
    state: SimState,
    dt: float,
    config: SimConfig,
    flow: LinearFlow | None = None,
    integrator: Integrator | None = None,
) -> SimState:
    """One IF-RK4 step; raises ``CFLViolation`` when dt exceeds the CFL limit."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    integ = integrator or _integrator_for(config, state.grid, flow)
    y = state.pack()
    limit = integ.cfl_dt(state.t, y, config.cfl)
    if dt > limit * (1 + 1e-12):
        raise CFLViolation(dt, limit)
    return SimState.unpack(state.grid, state.t + dt, integ.lawson_rk4(state.t, y, dt))


def identity_snapshots(
    state: SimState, h: float, config: SimConfig, flow: LinearFlow
) -> tuple[SimState, SimState, SimState]:
    """States at t - h, t, t + h, each a single IF-RK4 step from ``state``.

    The local error is O(h^5), so centred differences built from these
    snapshots are dominated by the O(h^2) differencing error.
    """
    integ = _integrator_for(config, state.grid, flow)
    y = state.pack()
    back = SimState.unpack(state.grid, state.t - h, integ.lawson_rk4(state.t, y, -h))
    fwd = SimState.unpack(state.grid, state.t + h, integ.lawson_rk4(state.t, y, h))
    return back, state, fwd


Observer = Callable[[float, SimState, dict], object]


@dataclass
class RunResult:
    """Raw output of ``run`` before diagnostics are attached."""

    times: list[float] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    final_state: SimState | None = None
    steps: int = 0
    completed: bool = False
    blowup: bool = False
    nan: bool = False
    aborted_by: str | None = None
    message: str = ""


def run(
    config: SimConfig,
    state: SimState,
    flow: LinearFlow | None = None,
    observers: Sequence[Observer] = (),
    sigma: float | None = None,
    eta: float | None = None,
    decay_window: tuple[float, float] | None = None,
):
    """Advance ``state`` to ``config.t_end`` and return an ``EnergyReport``.

    Observers are called as ``obs(t, state, row)`` every ``config.stride``
    steps (and at the end); a truthy return value stops the run.  With a
    fixed ``config.dt`` every step is checked against the CFL limit and a
    violation raises ``CFLViolation``.
    """
    from .diagnostics import EnergyReport, choose_sigma, energy_functionals

    grid = state.grid
    integ = _integrator_for(config, grid, flow)
    if sigma is None:
        sigma = choose_sigma(max(config.nu, 1e-300), max(config.lam, 1e-300))

    def perturbation_of(s: SimState):
        if config.mode == "perturbation" or flow is None:
            return s.u, s.theta
        return s.u - flow.velocity_at(s.t), s.theta - flow.theta_at(s.t)

    def total_velocity_h3(s: SimState) -> float:
        if config.mode == "perturbation":
            return hm_norm(s.u + flow.velocity_at(s.t), 3)
        return hm_norm(s.u, 3)

    ref = max(total_velocity_h3(state), 1e-300)
    guard = config.blowup_factor * ref
    result = RunResult()

    def record(s: SimState) -> bool:
        v, th = perturbation_of(s)
        A, B = energy_functionals(v, th, sigma, config.nu, config.lam)
        row = {"t": s.t, "v_h3": hm_norm(v, 3), "theta_h3": hm_norm(th, 3), "A": A, "B": B}
        result.times.append(s.t)
        result.rows.append(row)
        stop = False
        for obs in observers:
            if obs(s.t, s, row):
                result.aborted_by = getattr(obs, "__name__", type(obs).__name__)
                stop = True
        return stop

    stop = record(state)
    y = state.pack()
    t = state.t
    n = 0
    while not stop and t < config.t_end - 1e-12 * config.t_end:
        if config.dt is not None:
            h = config.dt
            limit = integ.cfl_dt(t, y, config.cfl)
            if h > limit * (1 + 1e-12):
                raise CFLViolation(h, limit)
        else:
            h = min(integ.cfl_dt(t, y, config.cfl), config.dt_max)
        h = min(h, config.t_end - t)
        y = integ.lawson_rk4(t, y, h)
        t += h
        n += 1
        if not np.all(np.isfinite(y)):
            result.nan = True
            result.message = f"non-finite state at t = {t:.6g} after {n} steps"
            break
        last = t >= config.t_end - 1e-12 * config.t_end
        if n % config.stride == 0 or last:
            s = SimState.unpack(grid, t, y)
            if total_velocity_h3(s) > guard:
                result.blowup = True
                result.message = f"H3 norm exceeded {config.blowup_factor:g} x initial at t = {t:.6g}"
                record(s)
                break
            stop = record(s)
    result.final_state = SimState.unpack(grid, t, y)
    result.steps = n
    result.completed = not (result.nan or result.blowup or stop) and t >= config.t_end - 1e-12 * config.t_end
    return EnergyReport.from_run(result, sigma=sigma, eta=eta, nu=config.nu, lam=config.lam, decay_window=decay_window)


def linear_only(config: SimConfig) -> SimConfig:
    return replace(config, nonlinear=False)
