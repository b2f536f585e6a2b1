"""Experiment drivers behind the CLI subcommands.

Each driver takes a ``Config`` and an output directory, writes its CSV and
summary files there and returns ``(summary, ok)``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import Config, make_config
from .fields import (
    GridSpec,
    SpectralField,
    advect,
    divergence,
    gradient,
    hm_norm,
    linf_norm,
    save_field,
)
from .initial_data import (
    build_a0_2d,
    build_a0_3d,
    largeness_report,
    make_linear_data,
    random_perturbation,
)
from .linear_flow import LinearFlow, compute_e0_f0
from .littlewood_paley import export_cutoff_table
from .simulation import SimConfig, SimState, identity_snapshots, run

LINEAR_HEADER = ("t", "U_h3", "Theta_h3", "f_h3", "g_h3", "UTheta_linf")


@dataclass
class Problem:
    grid: GridSpec
    a0: SpectralField
    U0: SpectralField
    Theta0: SpectralField
    v0: SpectralField
    vartheta0: SpectralField
    flow: LinearFlow


def build_problem(cfg: Config) -> Problem:
    grid = cfg.grid()
    params = cfg.data_params()
    a0 = build_a0_2d(params, grid) if cfg.d == 2 else build_a0_3d(params, grid)
    U0, Theta0 = make_linear_data(a0)
    pert = cfg["perturbation"]
    v0, th0 = random_perturbation(grid, float(pert["h3_norm"]), np.random.default_rng(pert["seed"]), pert["kmax"])
    return Problem(grid, a0, U0, Theta0, v0, th0, LinearFlow.from_initial(U0, Theta0, cfg.nu, cfg.lam))


def write_summary(outdir: Path, name: str, summary: dict) -> None:
    """``<name>.txt`` holds ``key = value`` lines, ``<name>.json`` the same data."""
    outdir.mkdir(parents=True, exist_ok=True)
    clean = {k: _plain(v) for k, v in summary.items()}
    with open(outdir / f"{name}.txt", "w") as fh:
        for k, v in clean.items():
            fh.write(f"{k} = {v}\n")
    with open(outdir / f"{name}.json", "w") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def structural_checks(U0: SpectralField, Theta0: SpectralField) -> dict:
    """div U0 and U0.grad Theta0, both relative to the natural scale."""
    div = linf_norm(divergence(U0))
    adv = linf_norm(advect(U0, Theta0))
    scale = linf_norm(U0) * linf_norm(gradient(Theta0))
    return {"div_U0": div, "adv_U0_Theta0": adv, "adv_scale": scale}


# -- build-data -----------------------------------------------------------------
def build_data(cfg: Config, outdir: Path) -> tuple[dict, bool]:
    prob = build_problem(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    save_field(outdir / "a0.npz", prob.a0, "a0")
    save_field(outdir / "U0.npz", prob.U0, "U0")
    save_field(outdir / "Theta0.npz", prob.Theta0, "Theta0")
    export_cutoff_table(outdir / "cutoff.csv")
    p = float(cfg["p_exponent"]) if cfg.d == 3 else 2.0
    summary = {"dimension": cfg.d, "epsilon": cfg.epsilon, "amplitude": cfg.data_params().amp}
    summary.update({"grid_L": list(prob.grid.L), "grid_N": list(prob.grid.N)})
    summary.update(largeness_report(prob.U0, prob.Theta0, p=p).as_dict())
    checks = structural_checks(prob.U0, prob.Theta0)
    summary.update(checks)
    ok = checks["div_U0"] <= 1e-12 and checks["adv_U0_Theta0"] <= 1e-12 * max(checks["adv_scale"], 1e-300)
    summary["ok"] = ok
    write_summary(outdir, "build_data", summary)
    return summary, ok


# -- linear ---------------------------------------------------------------------
def linear_series(flow: LinearFlow, times) -> list[tuple[float, ...]]:
    rows = []
    for t in times:
        f, g = flow.forcing_norms(float(t))
        rows.append(
            (
                float(t),
                hm_norm(flow.velocity_at(t), 3),
                hm_norm(flow.theta_at(t), 3),
                f,
                g,
                flow.sup_norm(float(t)),
            )
        )
    return rows


def condition_for(cfg: Config, prob: Problem, E0: float, F0: float) -> diag.ConditionResult:
    cond = cfg["condition"]
    sigma = diag.choose_sigma(cfg.nu, cfg.lam, cond["c_abs"])
    params = diag.ConditionParams(cond["C"], cond["delta"], sigma)
    return diag.condition_lhs(prob.v0, prob.vartheta0, E0, F0, params, cond["C_grid"])


def linear(cfg: Config, outdir: Path, n_samples: int = 201) -> tuple[dict, bool]:
    prob = build_problem(cfg)
    flow = prob.flow
    q = cfg["quadrature"]
    t_end = float(cfg["simulate"]["t_end"])
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "linear.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LINEAR_HEADER)
        for row in linear_series(flow, np.linspace(0.0, t_end, n_samples)):
            w.writerow([f"{x:.17g}" for x in row])
    quad = compute_e0_f0(flow, "quadrature", q["tol"], q["t_max"])
    bound = compute_e0_f0(flow, "bound")
    chosen = quad if q["mode"] == "quadrature" else bound
    cond = condition_for(cfg, prob, chosen.E0, chosen.F0)
    summary = {
        "epsilon": cfg.epsilon,
        "nu": cfg.nu,
        "lambda": cfg.lam,
        "E0_quadrature": quad.E0,
        "E0_quadrature_error": quad.E0_error,
        "F0_quadrature": quad.F0,
        "F0_quadrature_error": quad.F0_error,
        "quadrature_converged": quad.converged,
        "E0_bound": bound.E0,
        "F0_bound": bound.F0,
        "E0_mode": chosen.mode,
        "condition_lhs": cond.lhs,
        "condition_delta": cond.params.delta,
        "condition_holds": cond.verdict,
        "condition_lhs_by_C": cond.by_C,
        "sigma": cond.params.sigma,
    }
    ok = quad.converged and quad.E0 <= bound.E0 * (1 + 1e-9) and quad.F0 <= bound.F0 * (1 + 1e-9)
    summary["ok"] = ok
    write_summary(outdir, "linear", summary)
    return summary, ok


# -- simulate -------------------------------------------------------------------
class SnapshotWriter:
    """Observer saving the state once the run passes each requested time."""

    def __init__(self, outdir: Path, times):
        self.outdir = outdir
        self.pending = sorted(float(t) for t in times)
        self.written: list[float] = []

    def __call__(self, t, state, row):
        while self.pending and t >= self.pending[0] - 1e-12:
            self.pending.pop(0)
            tag = f"{t:.6g}"
            save_field(self.outdir / f"snapshot_u_t{tag}.npz", state.u, f"u@{tag}")
            save_field(self.outdir / f"snapshot_theta_t{tag}.npz", state.theta, f"theta@{tag}")
            self.written.append(t)
        return False


def sim_config(cfg: Config, mode: str | None = None, t_end: float | None = None, dt=None) -> SimConfig:
    s = cfg["simulate"]
    return SimConfig(
        nu=cfg.nu,
        lam=cfg.lam,
        t_end=float(s["t_end"] if t_end is None else t_end),
        cfl=float(s["cfl"]),
        stride=int(s["stride"]),
        dt=s["dt"] if dt is None else dt,
        dt_max=float(s["dt_max"]),
        mode=mode or s["mode"],
        blowup_factor=float(s["guards"]["blowup_factor"]),
    )


def initial_state(prob: Problem, mode: str) -> SimState:
    if mode == "perturbation":
        return SimState(0.0, prob.v0, prob.vartheta0)
    return SimState(0.0, prob.U0 + prob.v0, prob.Theta0 + prob.vartheta0)


def simulate(cfg: Config, outdir: Path, observers=()) -> tuple[dict, bool]:
    prob = build_problem(cfg)
    q = cfg["quadrature"]
    e0f0 = compute_e0_f0(prob.flow, q["mode"], q["tol"], q["t_max"])
    cond = condition_for(cfg, prob, e0f0.E0, e0f0.F0)
    eta = diag.eta_from_lhs(cond.lhs)
    sc = sim_config(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    writer = SnapshotWriter(outdir, cfg["simulate"]["snapshot_times"])
    start = time.perf_counter()
    report = run(sc, initial_state(prob, sc.mode), prob.flow, [writer, *observers], cond.params.sigma, eta)
    report.condition_lhs = cond.lhs
    report.to_csv(outdir / "energy.csv")
    summary = {"mode": sc.mode, "epsilon": cfg.epsilon, "E0": e0f0.E0, "F0": e0f0.F0, **report.summary()}
    summary["condition_lhs_by_C"] = cond.by_C
    summary["snapshots"] = writer.written
    summary["wall_seconds"] = time.perf_counter() - start
    ok = report.completed and not (report.verdict and report.verdict.exited)
    summary["ok"] = ok
    write_summary(outdir, "simulate", summary)
    return summary, ok


# -- verify ---------------------------------------------------------------------
def verify(cfg: Config, outdir: Path) -> tuple[dict, bool]:
    """Energy identity refinement, commutator study and the condition."""
    prob = build_problem(cfg)
    v = cfg["verify"]
    sigma = diag.choose_sigma(cfg.nu, cfg.lam, cfg["condition"]["c_abs"])
    sc = sim_config(cfg, mode="perturbation", t_end=float(v["identity_t"]))
    rep = run(sc, initial_state(prob, "perturbation"), prob.flow, sigma=sigma)
    state = rep.final_state
    checks = []
    for h in v["identity_dts"]:
        chk = diag.energy_identity_check(identity_snapshots(state, float(h), sc, prob.flow), prob.flow, sigma)
        checks.append(chk)
    residuals = [c.residual for c in checks]
    orders = [
        math.log(residuals[i] / residuals[i + 1]) / math.log(checks[i].dt / checks[i + 1].dt)
        if residuals[i + 1] > 0 and residuals[i] > 0
        else math.nan
        for i in range(len(checks) - 1)
    ]
    finest = checks[-1]
    identity_ok = finest.relative <= 1e-6 and all(o >= 1.8 for o in orders if math.isfinite(o))

    small = GridSpec(prob.grid.d, 1.0, 32 if prob.grid.d == 2 else 24)
    study = diag.commutator_study(small, int(v["commutator_pairs"]), float(v["commutator_kmax"]))
    commutator_ok = math.isfinite(study.max) and study.refinement_change <= 0.2

    q = cfg["quadrature"]
    e0f0 = compute_e0_f0(prob.flow, q["mode"], q["tol"], q["t_max"])
    cond = condition_for(cfg, prob, e0f0.E0, e0f0.F0)
    summary = {
        "identity_t": float(state.t),
        "identity_dts": [c.dt for c in checks],
        "identity_residuals": residuals,
        "identity_relative": [c.relative for c in checks],
        "identity_orders": orders,
        "identity_terms": {"I1": finest.terms.I1, "I2": finest.terms.I2, "I3": finest.terms.I3, "I4": finest.terms.I4},
        "identity_ok": identity_ok,
        "commutator_max_ratio": study.max,
        "commutator_max_ratio_refined": study.max_fine,
        "commutator_refinement_change": study.refinement_change,
        "commutator_ok": commutator_ok,
        "E0": e0f0.E0,
        "F0": e0f0.F0,
        "condition_lhs": cond.lhs,
        "condition_holds": cond.verdict,
        "condition_lhs_by_C": cond.by_C,
    }
    ok = identity_ok and commutator_ok and cond.verdict
    summary["ok"] = ok
    write_summary(outdir, "verify", summary)
    return summary, ok


# -- sweep ----------------------------------------------------------------------
SWEEP_HEADER = (
    "epsilon",
    "nu",
    "lambda",
    "E0",
    "F0",
    "a0_l2",
    "a0_hat_l1",
    "E0_ratio",
    "F0_ratio",
    "condition_lhs",
    "sup_A",
    "monitor_exited",
    "decay_rate",
)


def _sweep_point(args) -> dict:
    raw, simulate_too = args
    cfg = make_config(raw)
    prob = build_problem(cfg)
    q = cfg["quadrature"]
    e0f0 = compute_e0_f0(prob.flow, q["mode"], q["tol"], q["t_max"])
    rep = largeness_report(prob.U0, prob.Theta0, besov_params=())
    cond = condition_for(cfg, prob, e0f0.E0, e0f0.F0)
    row = {
        "epsilon": cfg.epsilon,
        "nu": cfg.nu,
        "lambda": cfg.lam,
        "E0": e0f0.E0,
        "F0": e0f0.F0,
        "a0_l2": rep.a0_l2,
        "a0_hat_l1": rep.a0_hat_l1,
        "E0_ratio": e0f0.E0 / (cfg.epsilon * rep.a0_l2 * rep.a0_hat_l1),
        "F0_ratio": e0f0.F0 / rep.a0_hat_l1,
        "condition_lhs": cond.lhs,
        "sup_A": math.nan,
        "monitor_exited": "",
        "decay_rate": math.nan,
    }
    if simulate_too:
        report = run(sim_config(cfg), initial_state(prob, cfg["simulate"]["mode"]), prob.flow,
                     sigma=cond.params.sigma, eta=diag.eta_from_lhs(cond.lhs))
        row["sup_A"] = float(np.max(report.A))
        row["monitor_exited"] = bool(report.verdict.exited)
        row["decay_rate"] = report.decay.rate if report.decay else math.nan
    return row


def sweep_points(cfg: Config) -> list[dict]:
    s = cfg["sweep"]
    eps = s["epsilon"] or [cfg.epsilon]
    nus = s["nu"] or [cfg.nu]
    lams = s["lambda"] or [cfg.lam]
    points = []
    for e, n, l in itertools.product(eps, nus, lams):
        raw = {k: v for k, v in cfg.raw.items() if k != "sweep"}
        raw.update({"epsilon": e, "nu": n, "lambda": l})
        if cfg["grid"]["L"] is None:
            raw["grid"] = {"L": None, "N": None}
        points.append(raw)
    return points


def sweep(cfg: Config, outdir: Path) -> tuple[dict, bool]:
    """Independent points run in worker processes; rows are merged sorted by (epsilon, nu, lambda)."""
    points = sweep_points(cfg)
    for raw in points:
        make_config(raw)  # fail fast on invalid points
    jobs = [(raw, bool(cfg["sweep"]["simulate"])) for raw in points]
    workers = int(cfg["sweep"]["workers"])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    rows.sort(key=lambda r: (r["epsilon"], r["nu"], r["lambda"]))
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r[k] for k in SWEEP_HEADER])
    ok = all(not r["monitor_exited"] for r in rows)
    e_ratios = [r["E0_ratio"] for r in rows]
    f_ratios = [r["F0_ratio"] for r in rows]
    summary = {
        "points": len(rows),
        "E0_ratio_spread": max(e_ratios) / min(e_ratios) if min(e_ratios) > 0 else math.inf,
        "F0_ratio_spread": max(f_ratios) / min(f_ratios) if min(f_ratios) > 0 else math.inf,
        "ok": ok,
    }
    write_summary(outdir, "sweep", summary)
    return summary, ok
