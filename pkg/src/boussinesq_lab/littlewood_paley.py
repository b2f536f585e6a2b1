"""Dyadic cutoffs, Littlewood-Paley blocks and Besov norms."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import ShellTruncationWarning, SpectralField, lp_norm

INNER = 3.0 / 4.0
OUTER = 4.0 / 3.0


def smoothstep(t, order: int = 1):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1.

    s(t) = B(t) / (B(t) + B(1 - t)) with B(t) = exp(-t^-order) for t > 0.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        a = np.where(t > 0, np.exp(-np.power(np.where(t > 0, t, 1.0), -order)), 0.0)
        s = 1.0 - t
        b = np.where(s > 0, np.exp(-np.power(np.where(s > 0, s, 1.0), -order)), 0.0)
    return a / (a + b)


def ramp(x, start: float, stop: float, order: int = 1):
    """Smooth ramp from 0 (x <= start) to 1 (x >= stop)."""
    return smoothstep((np.asarray(x, dtype=float) - start) / (stop - start), order)


@dataclass(frozen=True)
class DyadicCutoff:
    """Radial profile pair (chi, phi) with phi(xi) = chi(xi/2) - chi(xi).

    chi is 1 on |xi| <= 3/4 and vanishes for |xi| >= 4/3.
    """

    transition_order: int = 1

    def chi(self, r):
        return 1.0 - ramp(np.abs(r), INNER, OUTER, self.transition_order)

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return self.chi(r / 2.0) - self.chi(r)


def build_cutoff(transition_order: int = 1) -> DyadicCutoff:
    if transition_order < 1:
        raise ValueError("transition_order must be >= 1")
    return DyadicCutoff(int(transition_order))


_DEFAULT = DyadicCutoff()


def block(
    f: SpectralField, q: int, kind: str = "delta", cutoff: DyadicCutoff | None = None
) -> SpectralField:
    """Littlewood-Paley piece of ``f``.

    kind="delta_dot" gives the homogeneous block phi(2^-q xi); kind="delta"
    gives the inhomogeneous one (equal to delta_dot for q >= 0, chi for
    q = -1 and 0 below); kind="S" gives the low-frequency cutoff chi(2^-q xi).
    """
    cutoff = cutoff or _DEFAULT
    r = f.grid.xi_mag * 2.0**-q
    if kind == "delta_dot":
        symbol = cutoff.phi(r)
    elif kind == "S":
        symbol = cutoff.chi(r)
    elif kind == "delta":
        if q <= -2:
            return SpectralField.zeros(f.grid, f.m)
        symbol = cutoff.chi(f.grid.xi_mag) if q == -1 else cutoff.phi(r)
    else:
        raise ValueError(f"unknown block kind {kind!r}")
    return f.with_coeffs(f.coeffs * symbol)


def block_range(f: SpectralField, homogeneous: bool) -> range:
    """Indices q of the blocks that can be nonzero for ``f``."""
    mag = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))
    r = f.grid.xi_mag[mag > 0]
    if r.size == 0:
        return range(0)
    positive = r[r > 0]
    hi = math.ceil(math.log2(r.max() * 4.0 / 3.0)) + 1 if r.max() > 0 else -1
    if homogeneous:
        if positive.size == 0:
            return range(0)
        lo = math.floor(math.log2(positive.min() * 3.0 / 8.0)) - 1
    else:
        lo = -1
        hi = max(hi, -1)
    return range(lo, hi + 1)


def besov_norm(
    f: SpectralField,
    s: float,
    p: float,
    r: float,
    homogeneous: bool = False,
    cutoff: DyadicCutoff | None = None,
) -> float:
    """l^r over q of 2^(qs) ||block_q f||_{L^p}.

    Warns with ``ShellTruncationWarning`` when a block with coefficients
    outside the dealiasing mask (the outer third of the resolvable band, where
    the grid cuts shells off) carries more than 1e-10 of the norm.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    kind = "delta_dot" if homogeneous else "delta"
    outer = ~f.grid.dealias_mask
    terms = []
    edge = []
    for q in block_range(f, homogeneous):
        b = block(f, q, kind, cutoff)
        if not np.any(b.coeffs):
            continue
        terms.append(2.0 ** (q * s) * lp_norm(b, p))
        edge.append(bool(np.any(b.coeffs[:, outer])))
    if not terms:
        return 0.0
    terms = np.array(terms)
    total = terms.max() if math.isinf(r) else float(np.sum(terms**r) ** (1.0 / r))
    lost = terms[np.array(edge)]
    if lost.size and lost.max() > 1e-10 * total:
        warnings.warn(
            "dyadic blocks reaching the outer third of the grid carry part of the Besov norm; "
            "the grid may truncate the field's shells",
            ShellTruncationWarning,
            stacklevel=2,
        )
    return float(total)


def partition_defect(xi_samples, cutoff: DyadicCutoff | None = None, q_max: int = 8) -> float:
    """max |chi(xi) + sum_{q=0}^{q_max} phi(2^-q xi) - 1| over the samples."""
    cutoff = cutoff or _DEFAULT
    r = np.abs(np.asarray(xi_samples, dtype=float))
    total = cutoff.chi(r)
    for q in range(q_max + 1):
        total = total + cutoff.phi(r * 2.0**-q)
    return float(np.max(np.abs(total - 1.0)))


def export_cutoff_table(
    path: str | Path, cutoff: DyadicCutoff | None = None, r_max: float = 3.0, n: int = 601
) -> None:
    """CSV with columns xi, chi, phi."""
    cutoff = cutoff or _DEFAULT
    r = np.linspace(0.0, r_max, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi", "chi", "phi"])
        for ri, c, p in zip(r, cutoff.chi(r), cutoff.phi(r)):
            w.writerow([f"{ri:.10g}", f"{c:.17g}", f"{p:.17g}"])
