"""Energy functionals, the smallness condition, the bootstrap monitor and
numerical checks of the identities and estimates used in the energy argument.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fields import (
    SpectralField,
    advect,
    derivative,
    gradient,
    hm_inner,
    hm_norm,
    l2_inner,
    linf_norm,
    multi_indices,
    multiply,
    random_band_limited,
    resample,
)

CSV_HEADER = ("t", "v_h3", "theta_h3", "A", "B")
DEFAULT_C_GRID = (1.0, 2.0, 4.0, 8.0)


# -- sigma and the energy functionals ----------------------------------------
def choose_sigma(nu: float, lam: float, c_abs: float = 0.5, k_max: int = 200) -> float:
    """Largest sigma = 2^-k with c_abs sigma^(3/2) <= sigma nu / 2 and c_abs sigma^(1/2) <= lam / 2.

    The default c_abs = 1/2 comes from Cauchy-Schwarz and Young:
    sigma (theta, v_d)_H3 <= (sigma^(3/2) ||v||^2 + sigma^(1/2) ||theta||^2) / 2.
    """
    if not (nu > 0 and lam > 0 and c_abs > 0):
        raise ValueError("nu, lam and c_abs must be positive")
    for k in range(k_max + 1):
        sigma = 2.0**-k
        root = math.sqrt(sigma)
        if c_abs * root <= nu / 2 and c_abs * root <= lam / 2:
            return sigma
    return 2.0**-k_max


def energy_functionals(
    v: SpectralField, vartheta: SpectralField, sigma: float, nu: float, lam: float
) -> tuple[float, float]:
    """A = sigma ||v||^2_H3 + ||vartheta||^2_H3 and B = sigma nu ||v||^2_H3 + lam ||vartheta||^2_H3."""
    v2 = hm_norm(v, 3) ** 2
    t2 = hm_norm(vartheta, 3) ** 2
    return sigma * v2 + t2, sigma * nu * v2 + lam * t2


def buoyancy_pairing(v: SpectralField, vartheta: SpectralField) -> float:
    """(vartheta, v_d)_H3, the term the choice of sigma has to absorb."""
    return hm_inner(vartheta, v.component(v.m - 1), 3)


# -- the smallness condition ---------------------------------------------------
@dataclass(frozen=True)
class ConditionParams:
    C: float = 1.0
    delta: float = 1.0
    sigma: float = 0.25

    def __post_init__(self):
        if not (self.C > 0 and self.delta > 0 and self.sigma > 0):
            raise ValueError("C, delta and sigma must be positive")


@dataclass
class ConditionResult:
    lhs: float
    verdict: bool
    params: ConditionParams
    by_C: dict[float, float] = field(default_factory=dict)

    def at(self, C: float) -> float:
        return self.by_C.get(C, math.nan)


def condition_value(v0_h3: float, theta0_h3: float, E0: float, F0: float, C: float) -> float:
    """(||v0||^2 + ||theta0||^2 + E0) exp(C F0 + C E0)."""
    return (v0_h3**2 + theta0_h3**2 + E0) * math.exp(C * F0 + C * E0)


def condition_lhs(
    v0: SpectralField | None,
    vartheta0: SpectralField | None,
    E0: float,
    F0: float,
    params: ConditionParams = ConditionParams(),
    C_grid: Sequence[float] = DEFAULT_C_GRID,
) -> ConditionResult:
    """Evaluate the smallness condition; ``by_C`` holds the LHS over ``C_grid``."""
    a = 0.0 if v0 is None else hm_norm(v0, 3)
    b = 0.0 if vartheta0 is None else hm_norm(vartheta0, 3)
    lhs = condition_value(a, b, E0, F0, params.C)
    by_c = {float(c): condition_value(a, b, E0, F0, c) for c in C_grid}
    by_c[float(params.C)] = lhs
    return ConditionResult(lhs, lhs <= params.delta, params, by_c)


def eta_from_lhs(lhs: float) -> float:
    """Bootstrap threshold eta = 2 * LHS."""
    return 2.0 * lhs


# -- bootstrap monitor ---------------------------------------------------------
@dataclass(frozen=True)
class MonitorVerdict:
    exited: bool
    index: int | None = None
    t_exit: float | None = None

    def __str__(self) -> str:
        return f"exited at t = {self.t_exit:.6g}" if self.exited else "never exited"


def bootstrap_monitor(series: Sequence[float], eta: float, times: Sequence[float] | None = None) -> MonitorVerdict:
    """First sample with A > eta, if any."""
    A = np.asarray(series, dtype=float)
    above = np.nonzero(~(A <= eta))[0]  # NaN counts as an exit
    if above.size == 0:
        return MonitorVerdict(False)
    i = int(above[0])
    t = float(times[i]) if times is not None else float(i)
    return MonitorVerdict(True, i, t)


# -- decay fit -----------------------------------------------------------------
@dataclass(frozen=True)
class DecayFit:
    rate: float
    residual: float
    n: int
    degenerate: bool = False


def decay_fit(
    times: Sequence[float], series: Sequence[float], window: tuple[float, float] | None = None
) -> DecayFit:
    """Least-squares fit log(series) ~ c - rate * t over ``window``.

    Non-positive samples inside the window make the fit degenerate; the
    returned rate is then NaN.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, y = t[keep], y[keep]
    if t.size < 2 or np.any(~(y > 0)):
        return DecayFit(math.nan, math.nan, int(t.size), True)
    logs = np.log(y)
    coef, res, *_ = np.polyfit(t, logs, 1, full=True)
    resid = float(math.sqrt(res[0] / t.size)) if res.size else 0.0
    return DecayFit(float(-coef[0]), resid, int(t.size))


# -- energy report ---------------------------------------------------------------
@dataclass
class EnergyReport:
    """Time series of the energy functionals plus the verdicts derived from them."""

    t: np.ndarray
    v_h3: np.ndarray
    theta_h3: np.ndarray
    A: np.ndarray
    B: np.ndarray
    sigma: float
    nu: float
    lam: float
    eta: float | None = None
    condition_lhs: float | None = None
    verdict: MonitorVerdict | None = None
    decay: DecayFit | None = None
    completed: bool = True
    blowup: bool = False
    nan: bool = False
    steps: int = 0
    message: str = ""
    final_state: object = None

    @classmethod
    def from_run(cls, result, sigma, eta=None, nu=0.0, lam=0.0, decay_window=None) -> "EnergyReport":
        rows = result.rows
        col = lambda k: np.array([r[k] for r in rows], dtype=float)  # noqa: E731
        rep = cls(
            t=col("t"),
            v_h3=col("v_h3"),
            theta_h3=col("theta_h3"),
            A=col("A"),
            B=col("B"),
            sigma=sigma,
            nu=nu,
            lam=lam,
            eta=eta,
            completed=result.completed,
            blowup=result.blowup,
            nan=result.nan,
            steps=result.steps,
            message=result.message,
            final_state=result.final_state,
        )
        rep.update_verdicts(eta, decay_window)
        return rep

    def update_verdicts(self, eta=None, decay_window=None) -> None:
        if eta is not None:
            self.eta = eta
        if self.eta is not None:
            self.verdict = bootstrap_monitor(self.A, self.eta, self.t)
        if self.t.size >= 2:
            if decay_window is None:
                decay_window = (self.t[-1] / 2, self.t[-1])
            self.decay = decay_fit(self.t, self.A, decay_window)

    @property
    def energy(self) -> np.ndarray:
        """||v||^2_H3 + ||vartheta||^2_H3."""
        return self.v_h3**2 + self.theta_h3**2

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for row in zip(self.t, self.v_h3, self.theta_h3, self.A, self.B):
                w.writerow([f"{x:.17g}" for x in row])

    def summary(self) -> dict:
        i_max = int(np.argmax(self.energy)) if self.t.size else 0
        out = {
            "sigma": self.sigma,
            "nu": self.nu,
            "lambda": self.lam,
            "eta": self.eta,
            "condition_lhs": self.condition_lhs,
            "monitor": str(self.verdict) if self.verdict else None,
            "monitor_exited": self.verdict.exited if self.verdict else None,
            "sup_energy": float(self.energy[i_max]) if self.t.size else 0.0,
            "t_sup_energy": float(self.t[i_max]) if self.t.size else 0.0,
            "sup_A": float(np.max(self.A)) if self.t.size else 0.0,
            "decay_rate": self.decay.rate if self.decay else None,
            "decay_residual": self.decay.residual if self.decay else None,
            "completed": self.completed,
            "blowup": self.blowup,
            "nan": self.nan,
            "steps": self.steps,
            "t_final": float(self.t[-1]) if self.t.size else 0.0,
        }
        if self.message:
            out["message"] = self.message
        return out


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {h: data[:, i] for i, h in enumerate(header)}


# -- energy identity -----------------------------------------------------------
@dataclass(frozen=True)
class EnergyTerms:
    I1: float
    I2: float
    I3: float
    I4: float

    @property
    def total(self) -> float:
        return self.I1 + self.I2 + self.I3 + self.I4


def _sum_over(beta_list, fn) -> float:
    return float(sum(fn(beta) for beta in beta_list))


def energy_terms(
    v: SpectralField, vartheta: SpectralField, U: SpectralField, Theta: SpectralField, sigma: float
) -> EnergyTerms:
    """I1..I4 evaluated as the explicit integrals.

    I1 and I2 run over 0 < |beta| <= 3 (I1 in commutator form
    D^beta(v.grad w) - v.grad D^beta w); I3 and I4 run over |beta| <= 3.
    Products are dealiased; for band-limited fields inside the mask the
    pairing with a masked field is then exact.
    """
    d = v.grid.d
    nonzero = multi_indices(d, 3, min_order=1)

    def pair(X, Y, beta):
        return l2_inner(derivative(X, beta), derivative(Y, beta))

    def commutator(w, beta):
        return derivative(advect(v, w), beta) - advect(v, derivative(w, beta))

    I1 = -sigma * _sum_over(nonzero, lambda b: l2_inner(commutator(v, b), derivative(v, b))) - _sum_over(
        nonzero, lambda b: l2_inner(commutator(vartheta, b), derivative(vartheta, b))
    )
    I2 = -sigma * _sum_over(nonzero, lambda b: pair(advect(U, v), v, b)) - _sum_over(
        nonzero, lambda b: pair(advect(U, vartheta), vartheta, b)
    )
    I3 = -sigma * hm_inner(advect(v, U), v, 3) - hm_inner(advect(v, Theta), vartheta, 3)
    I4 = -sigma * hm_inner(advect(U, U), v, 3) - hm_inner(advect(U, Theta), vartheta, 3)
    return EnergyTerms(float(I1), float(I2), float(I3), float(I4))


@dataclass(frozen=True)
class IdentityCheck:
    t: float
    dt: float
    lhs: float
    rhs: float
    terms: EnergyTerms
    A: float
    B: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def relative(self) -> float:
        scale = self.A + self.B
        return self.residual / scale if scale > 0 else self.residual


def energy_identity_check(snapshots, flow, sigma: float, nu: float | None = None, lam: float | None = None) -> IdentityCheck:
    """Residual of the H3 energy identity from perturbation snapshots at t - dt, t, t + dt.

    d/dt A is a centred difference, so the residual is O(dt^2) plus the
    integrator error of the snapshots.
    """
    back, mid, fwd = snapshots
    nu = flow.nu if nu is None else nu
    lam = flow.lam if lam is None else lam
    dt = 0.5 * (fwd.t - back.t)
    A_back, _ = energy_functionals(back.u, back.theta, sigma, nu, lam)
    A_fwd, _ = energy_functionals(fwd.u, fwd.theta, sigma, nu, lam)
    A, B = energy_functionals(mid.u, mid.theta, sigma, nu, lam)
    lhs = 0.5 * (A_fwd - A_back) / (2 * dt) + B - sigma * buoyancy_pairing(mid.u, mid.theta)
    terms = energy_terms(mid.u, mid.theta, flow.velocity_at(mid.t), flow.theta_at(mid.t), sigma)
    return IdentityCheck(mid.t, dt, lhs, terms.total, terms, A, B)


# -- commutator and product estimates ---------------------------------------------
@dataclass(frozen=True)
class CommutatorMeasurement:
    lhs: float
    bracket: float

    @property
    def ratio(self) -> float:
        if self.lhs == 0:
            return 0.0
        return self.lhs / self.bracket if self.bracket > 0 else math.inf


def commutator_check(g: SpectralField, f: SpectralField, m: int = 3) -> CommutatorMeasurement:
    """sum_{|alpha|<=m} ||D^alpha(g f) - g D^alpha f||_L2 against
    ||f||_{H^(m-1)} ||grad g||_Linf + ||f||_Linf ||g||_{H^m}.

    ``g`` is scalar; ``f`` may have any number of components.
    """
    if g.m != 1:
        raise ValueError("g must be scalar")
    lhs = 0.0
    for alpha in multi_indices(g.grid.d, m):
        c = derivative(multiply(g, f), alpha) - multiply(g, derivative(f, alpha))
        lhs += math.sqrt(max(l2_inner(c, c), 0.0))
    bracket = hm_norm(f, m - 1) * linf_norm(gradient(g)) + linf_norm(f) * hm_norm(g, m)
    return CommutatorMeasurement(lhs, bracket)


def commutator_ratio(g: SpectralField, f: SpectralField, m: int = 3) -> float:
    return commutator_check(g, f, m).ratio


def product_ratio(f: SpectralField, g: SpectralField, m: int = 3) -> float:
    """||f g||_{H^m} / (||f||_Linf ||g||_{H^m} + ||f||_{H^m} ||g||_Linf)."""
    num = hm_norm(multiply(f, g), m)
    den = linf_norm(f) * hm_norm(g, m) + hm_norm(f, m) * linf_norm(g)
    return num / den if den > 0 else 0.0


@dataclass
class RatioStudy:
    ratios: np.ndarray
    ratios_fine: np.ndarray | None = None

    @property
    def max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def max_fine(self) -> float:
        return float(np.max(self.ratios_fine)) if self.ratios_fine is not None else math.nan

    @property
    def refinement_change(self) -> float:
        return abs(self.max_fine / self.max - 1.0)


def commutator_study(
    grid, n_pairs: int = 100, kmax: float = 4.0, seed: int = 0, m: int = 3, refine: bool = True, kind: str = "commutator"
) -> RatioStudy:
    """Ratios over random band-limited pairs; ``refine`` repeats on the same fields with N -> 2N."""
    from .fields import GridSpec

    rng = np.random.default_rng(seed)
    fine = GridSpec(grid.d, grid.L, tuple(2 * n for n in grid.N), grid.dealias_fraction) if refine else None
    measure = commutator_ratio if kind == "commutator" else product_ratio
    coarse, finer = [], []
    for _ in range(n_pairs):
        g = random_band_limited(grid, kmax, rng, m=1)
        f = random_band_limited(grid, kmax, rng, m=1)
        coarse.append(measure(g, f, m))
        if fine is not None:
            finer.append(measure(resample(g, fine), resample(f, fine), m))
    return RatioStudy(np.array(coarse), np.array(finer) if fine is not None else None)


def empirical_constant(grid, n_pairs: int = 20, kmax: float = 4.0, seed: int = 0) -> float:
    """Largest measured ratio of the commutator and product estimates.

    A stand-in for the unknown universal constant of the smallness
    condition; it is a measurement on random band-limited fields, not a
    proven bound.
    """
    com = commutator_study(grid, n_pairs, kmax, seed, refine=False).max
    prod = commutator_study(grid, n_pairs, kmax, seed + 1, refine=False, kind="product").max
    return max(com, prod)
