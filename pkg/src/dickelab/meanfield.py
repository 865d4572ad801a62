"""Thermodynamic-limit (mean-field) solver for the multilevel Dicke family.

With a coherent photon state <a> = sqrt(N) x (x real, taken >= 0; the sign
is a gauge choice) and all atoms in the same single-atom state, the energy
per atom is

    e(x) = (omega + 4 kappa) x^2 + min_spec[ diag(eps) + 2 x lam ]

The global minimum over x decides the phase: x* = 0 is normal, x* > 0 is
superradiant.  Minimization runs on a uniform grid (every grid-resolved
local minimum is refined by golden-section search), which is what makes
first-order transitions with competing minima safe to classify.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import BracketError
from .model import DickeModel, single_atom_matrix

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0

DEFAULT_GRID = 512
DEFAULT_X_TOL = 1e-6
DEFAULT_JUMP_THRESHOLD = 0.05


@dataclass(frozen=True)
class MeanFieldSolution:
    """Global minimum of e(x) plus every grid-resolved local minimum."""

    x_star: float
    e_star: float
    occupations: np.ndarray
    local_minima: tuple[tuple[float, float], ...]

    @property
    def superradiant(self) -> bool:
        return self.x_star > 0.0

    @property
    def n_local_minima(self) -> int:
        return len(self.local_minima)


@dataclass(frozen=True)
class TransitionPoint:
    """Critical coupling located by bisection, classified by the jump in x*.

    x_jump and pop_jump are evaluated at coupling_value*(1 +/- delta_rel).
    """

    coupling_value: float
    order: Literal["first", "second"]
    x_jump: float
    pop_jump: float
    delta_rel: float = 1e-4


def energy_density(model: DickeModel, x) -> np.ndarray | float:
    """e(x) per atom; x may be a scalar or an array."""
    xs = np.asarray(x, dtype=float)
    mats = np.diag(model.atom.energies) + 2.0 * xs[..., None, None] * model.atom.couplings
    e_min = np.linalg.eigvalsh(mats)[..., 0]
    out = model.omega_eff * xs**2 + e_min
    return float(out) if np.isscalar(x) or xs.ndim == 0 else out


def _x_max(omega_eff: np.ndarray, energies: np.ndarray, couplings: np.ndarray) -> np.ndarray:
    """Conservative scan bound: beyond it e(x) > e(0) = 0 is guaranteed.

    Gershgorin gives min_spec >= -2 x L with L the largest absolute row sum
    of the coupling matrix, so e(x) > 0 once omega_eff x^2 > eps_max + 2 L x.
    The positive root of that quadratic (padded) bounds all global minima.
    """
    L = np.abs(couplings).sum(axis=2).max(axis=1)
    eps_max = float(energies.max())
    root = (L + np.sqrt(L**2 + omega_eff * eps_max)) / omega_eff
    return np.maximum(1.25 * root, 1.0)


def _batch_energies(omega_eff, energies, couplings, xs):
    """e(x) for a batch: couplings (B,d,d), xs (B,G) -> (B,G)."""
    mats = np.diag(energies)[None, None] + 2.0 * xs[..., None, None] * couplings[:, None]
    e_min = np.linalg.eigvalsh(mats)[..., 0]
    return omega_eff[:, None] * xs**2 + e_min


def _solve_batch(omega_eff: np.ndarray, energies: np.ndarray, couplings: np.ndarray,
                 n_grid: int = DEFAULT_GRID, x_tol: float = DEFAULT_X_TOL
                 ) -> list[MeanFieldSolution]:
    """Minimize e(x) on [0, x_max] for B parameter sets in one vectorized pass."""
    B = couplings.shape[0]
    x_hi = _x_max(omega_eff, energies, couplings)
    grid = np.linspace(0.0, 1.0, n_grid)
    xs = x_hi[:, None] * grid[None, :]
    e = _batch_energies(omega_eff, energies, couplings, xs)

    # bracket every grid-resolved local minimum, boundaries included
    owners, los, his = [], [], []
    for b in range(B):
        eb = e[b]
        interior = np.flatnonzero((eb[1:-1] <= eb[:-2]) & (eb[1:-1] <= eb[2:])) + 1
        idx = list(interior)
        if eb[0] <= eb[1]:
            idx.append(0)
        if eb[-1] <= eb[-2]:
            idx.append(n_grid - 1)
        for i in idx:
            owners.append(b)
            los.append(xs[b, max(i - 1, 0)])
            his.append(xs[b, min(i + 1, n_grid - 1)])
    owners = np.array(owners)
    lo = np.array(los)
    hi = np.array(his)

    # golden-section refinement, vectorized across all brackets
    def feval(points):
        mats = np.diag(energies)[None] + 2.0 * points[:, None, None] * couplings[owners]
        return omega_eff[owners] * points**2 + np.linalg.eigvalsh(mats)[:, 0]

    h = hi - lo
    x_atol = 1e-12 * max(1.0, float(x_hi.max()))
    n_iter = max(1, math.ceil(math.log(x_atol / max(h.max(), x_atol)) / math.log(_INVPHI)))
    x1 = lo + _INVPHI2 * h
    x2 = lo + _INVPHI * h
    f1 = feval(x1)
    f2 = feval(x2)
    for _ in range(n_iter):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        h = hi - lo
        x1n = lo + _INVPHI2 * h
        x2n = lo + _INVPHI * h
        # after a left shrink the old x1 lands on x2n (and mirrored), so one
        # new evaluation per bracket per iteration is enough
        probe = np.where(left, x1n, x2n)
        fp = feval(probe)
        f1, f2 = np.where(left, fp, f2), np.where(left, f1, fp)
        x1, x2 = x1n, x2n

    x_ref = np.where(f1 < f2, x1, x2)
    e_ref = np.minimum(f1, f2)

    solutions = []
    for b in range(B):
        sel = owners == b
        cand_x = np.concatenate([[0.0], x_ref[sel]])
        cand_e = np.concatenate([[0.0], e_ref[sel]])  # e(0) = eps_0 = 0 exactly
        cand_x = np.where(cand_x <= x_tol, 0.0, cand_x)
        order = np.argsort(cand_x, kind="stable")
        cand_x, cand_e = cand_x[order], cand_e[order]
        keep_x, keep_e = [cand_x[0]], [cand_e[0]]
        for xv, ev in zip(cand_x[1:], cand_e[1:]):
            if xv - keep_x[-1] <= 1e-9 * max(1.0, x_hi[b]):
                if ev < keep_e[-1]:
                    keep_x[-1], keep_e[-1] = xv, ev
            else:
                keep_x.append(xv)
                keep_e.append(ev)
        best = int(np.argmin(keep_e))
        x_star = float(keep_x[best])
        mat = np.diag(energies) + 2.0 * x_star * couplings[b]
        vals, vecs = np.linalg.eigh(mat)
        occ = vecs[:, 0] ** 2
        occ.flags.writeable = False
        e_star = float(omega_eff[b] * x_star**2 + vals[0])
        solutions.append(MeanFieldSolution(
            x_star=x_star,
            e_star=e_star,
            occupations=occ,
            local_minima=tuple((float(a), float(c)) for a, c in zip(keep_x, keep_e)),
        ))
    return solutions


def minimize(model: DickeModel, n_grid: int = DEFAULT_GRID,
             x_tol: float = DEFAULT_X_TOL) -> MeanFieldSolution:
    """Global minimum of e(x) over x >= 0.

    Any refined x* at or below x_tol is snapped to exactly 0, so
    x_star == 0 is equivalent to the normal phase.
    """
    return _solve_batch(
        np.array([model.omega_eff]),
        model.atom.energies,
        model.atom.couplings[None],
        n_grid=n_grid,
        x_tol=x_tol,
    )[0]


def _scan_arrays(model: DickeModel, which: tuple[int, int], values: np.ndarray,
                 tie: Mapping[tuple[int, int], float] | None):
    """Coupling matrices and omega_eff for each scanned value."""
    B = values.size
    C = np.repeat(model.atom.couplings[None], B, axis=0)
    j, k = which
    if j == k:
        raise ValueError("scan coupling must be an off-diagonal pair")
    C[:, j, k] = C[:, k, j] = values
    if tie:
        for (tj, tk), ratio in tie.items():
            C[:, tj, tk] = C[:, tk, tj] = ratio * values
    omega_eff = np.full(B, model.omega_eff)
    return C, omega_eff


def scan_order_parameter(model: DickeModel, which: tuple[int, int],
                         values: Sequence[float],
                         tie: Mapping[tuple[int, int], float] | None = None,
                         n_grid: int = DEFAULT_GRID,
                         x_tol: float = DEFAULT_X_TOL) -> list[MeanFieldSolution]:
    """Solve the mean-field problem at each coupling value (ascending, >= 2).

    tie maps other coupling pairs to a ratio of the scanned value, so
    e.g. tie={(0, 1): 0.05} co-scales lam_01 = 0.05 * lam_12.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size < 2 or np.any(np.diff(vals) <= 0):
        raise ValueError("values must be strictly ascending with at least 2 entries")
    C, omega_eff = _scan_arrays(model, which, vals, tie)
    return _solve_batch(omega_eff, model.atom.energies, C, n_grid=n_grid, x_tol=x_tol)


def _solve_single(model, which, value, tie, n_grid, x_tol) -> MeanFieldSolution:
    C, omega_eff = _scan_arrays(model, which, np.array([value], dtype=float), tie)
    return _solve_batch(omega_eff, model.atom.energies, C, n_grid=n_grid, x_tol=x_tol)[0]


def critical_coupling(model: DickeModel, which: tuple[int, int],
                      bracket: tuple[float, float],
                      tie: Mapping[tuple[int, int], float] | None = None,
                      x_tol: float = DEFAULT_X_TOL,
                      jump_threshold: float = DEFAULT_JUMP_THRESHOLD,
                      rel_width: float = 1e-8,
                      delta_rel: float = 1e-4,
                      n_grid: int = DEFAULT_GRID) -> TransitionPoint:
    """Bisect the normal/superradiant indicator x*(lam) > x_tol inside bracket.

    The bracket must straddle the transition: normal at bracket[0],
    superradiant at bracket[1].  The order is classified from the jump of
    x* across lam_c +/- delta_rel*lam_c (first order above jump_threshold).
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0.0 <= lo < hi:
        raise ValueError("bracket must satisfy 0 <= lo < hi")

    def superradiant(lam: float) -> bool:
        return _solve_single(model, which, lam, tie, n_grid, x_tol).x_star > 0.0

    if superradiant(lo):
        raise BracketError(f"no transition in bracket: x* > 0 already at coupling {lo}")
    if not superradiant(hi):
        raise BracketError(f"no transition in bracket: x* = 0 still at coupling {hi}")

    width = rel_width * (hi - lo)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if superradiant(mid):
            hi = mid
        else:
            lo = mid
    lam_c = 0.5 * (lo + hi)

    delta = delta_rel * lam_c
    below = _solve_single(model, which, lam_c - delta, tie, n_grid, x_tol)
    above = _solve_single(model, which, lam_c + delta, tie, n_grid, x_tol)
    x_jump = abs(above.x_star - below.x_star)
    pop_jump = float(np.max(np.abs(above.occupations - below.occupations)))
    return TransitionPoint(
        coupling_value=lam_c,
        order="first" if x_jump > jump_threshold else "second",
        x_jump=x_jump,
        pop_jump=pop_jump,
        delta_rel=delta_rel,
    )


def no_go_check(model: DickeModel, lambda_max: float, n_points: int = 200,
                which: tuple[int, int] = (0, 1),
                kappa_rule: Literal["fixed", "trk-ground"] = "fixed",
                x_tol: float = DEFAULT_X_TOL,
                n_grid: int = DEFAULT_GRID) -> bool:
    """True iff the model stays normal for every coupling in [0, lambda_max].

    kappa_rule "fixed" keeps model.kappa; "trk-ground" sets, at each scan
    point, kappa = lam_01^2 / eps_1 (the ground-transition bound, which
    saturates the two-level no-go but leaves excited couplings free).
    """
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    if n_points < 100:
        raise ValueError("n_points must be at least 100")
    vals = np.linspace(0.0, lambda_max, n_points)
    C, omega_eff = _scan_arrays(model, which, vals, tie=None)
    if kappa_rule == "trk-ground":
        eps1 = float(model.atom.energies[1])
        if eps1 == 0.0:
            raise ValueError("degenerate ground transition")
        omega_eff = model.omega + 4.0 * (C[:, 0, 1] ** 2 / eps1)
    elif kappa_rule != "fixed":
        raise ValueError(f"unknown kappa_rule {kappa_rule!r}")
    sols = _solve_batch(omega_eff, model.atom.energies, C, n_grid=n_grid, x_tol=x_tol)
    return all(s.x_star == 0.0 for s in sols)


def transition_to_dict(tp: TransitionPoint) -> dict:
    return {
        "coupling_value": tp.coupling_value,
        "order": tp.order,
        "x_jump": tp.x_jump,
        "pop_jump": tp.pop_jump,
        "delta_rel": tp.delta_rel,
    }


def write_scan_csv(path, values: Sequence[float],
                   solutions: Sequence[MeanFieldSolution]) -> None:
    """Column order: coupling, x_star, e_star, pop_0..pop_{d-1}, n_local_minima."""
    d = solutions[0].occupations.size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coupling", "x_star", "e_star",
                         *[f"pop_{j}" for j in range(d)], "n_local_minima"])
        for value, sol in zip(values, solutions):
            writer.writerow([repr(float(value)), repr(sol.x_star), repr(sol.e_star),
                             *[repr(float(p)) for p in sol.occupations],
                             sol.n_local_minima])
