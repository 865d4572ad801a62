"""Cooper-pair-box spectrum in the charge basis.

H = 4 E_C (n - n_g)^2 - (E_J / 2) sum_n (|n><n+1| + |n+1><n|)

with n running over -n_cut..n_cut Cooper-pair charge states.  At a gate
sweet spot n_g = n + 1/2 the two lowest eigenstates approach the symmetric
and antisymmetric combinations of the degenerate charge pair,
|g> ~ (|n> + |n+1>)/sqrt(2) and |e> ~ (|n> - |n+1>)/sqrt(2), split by E_J,
with charge matrix element |<e|n|g>| -> 1/2.  The splitting stays finite
and gate-independent to first order only in the charge regime E_C >> E_J;
the solver itself is exact for any ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla


@dataclass(frozen=True)
class CpbSpec:
    ec: float
    ej: float
    ng: float
    n_cut: int = 12

    def __post_init__(self):
        if not self.ec > 0:
            raise ValueError("ec must be positive")
        if self.ej < 0:
            raise ValueError("ej must be nonnegative")
        if self.n_cut < 5 + math.ceil(abs(self.ng)):
            raise ValueError(
                f"n_cut must be at least 5 + ceil(|ng|) = {5 + math.ceil(abs(self.ng))}")

    @property
    def dim(self) -> int:
        return 2 * self.n_cut + 1

    @property
    def charges(self) -> np.ndarray:
        return np.arange(-self.n_cut, self.n_cut + 1)


def cpb_hamiltonian(spec: CpbSpec) -> np.ndarray:
    n = spec.charges.astype(float)
    h = np.diag(4.0 * spec.ec * (n - spec.ng) ** 2)
    off = np.full(spec.dim - 1, -spec.ej / 2.0)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def _spectrum(spec: CpbSpec):
    n = spec.charges.astype(float)
    diag = 4.0 * spec.ec * (n - spec.ng) ** 2
    off = np.full(spec.dim - 1, -spec.ej / 2.0)
    if spec.ej == 0.0:
        # eigh_tridiagonal requires nonzero off-diagonals
        order = np.argsort(diag, kind="stable")
        return diag[order], np.eye(spec.dim)[:, order]
    return sla.eigh_tridiagonal(diag, off)


@dataclass(frozen=True)
class SweetSpotReport:
    n: int
    overlap_g: float
    overlap_e: float
    splitting: float
    degenerate_pair: bool


def verify_sweet_spot_states(spec: CpbSpec, deg_tol: float = 1e-12) -> SweetSpotReport:
    """Overlap of the two lowest eigenstates with (|n> +/- |n+1>)/sqrt(2).

    Requires n_g = n + 1/2.  If the lowest two states are numerically
    degenerate (E_J = 0), overlaps are taken against the degenerate
    subspace, which lifts the basis ambiguity.  A third state degenerate
    with the pair is an error.
    """
    n = math.floor(spec.ng)
    if abs(spec.ng - n - 0.5) > 1e-9:
        raise ValueError(f"ng = {spec.ng} is not at a sweet spot n + 1/2")
    w, v = _spectrum(spec)
    scale = max(abs(w[0]), abs(w[-1]), 1.0)
    if w[2] - w[0] <= deg_tol * scale:
        raise ValueError("ground-state degeneracy beyond tolerance: "
                         "three or more states coincide at the sweet spot")
    i_n = n + spec.n_cut
    target_g = np.zeros(spec.dim)
    target_e = np.zeros(spec.dim)
    target_g[i_n] = target_g[i_n + 1] = 1.0 / math.sqrt(2.0)
    target_e[i_n] = 1.0 / math.sqrt(2.0)
    target_e[i_n + 1] = -1.0 / math.sqrt(2.0)
    degenerate = (w[1] - w[0]) <= deg_tol * scale
    if degenerate:
        # any basis of the 2d ground space works; project the targets on it
        sub = v[:, :2]
        overlap_g = float(np.sum((sub.T @ target_g) ** 2))
        overlap_e = float(np.sum((sub.T @ target_e) ** 2))
    else:
        overlap_g = float((v[:, 0] @ target_g) ** 2)
        overlap_e = float((v[:, 1] @ target_e) ** 2)
    return SweetSpotReport(n=n, overlap_g=overlap_g, overlap_e=overlap_e,
                           splitting=float(w[1] - w[0]), degenerate_pair=degenerate)


@dataclass(frozen=True)
class TwoLevelReduction:
    omega0_eff: float
    charge_matrix_element: float
    e_levels: tuple[float, ...]
    near_degenerate: bool


def two_level_reduction(spec: CpbSpec, separation_factor: float = 3.0) -> TwoLevelReduction:
    """Effective qubit splitting E_1 - E_0 and charge coupling |<1|n|0>|.

    near_degenerate flags a third level closer than separation_factor times
    the qubit splitting, where a two-level truncation stops being valid.
    """
    w, v = _spectrum(spec)
    omega0 = float(w[1] - w[0])
    elem = float(abs(v[:, 1] @ (spec.charges * v[:, 0])))
    near = (w[2] - w[1]) < separation_factor * omega0
    levels = tuple(float(x) for x in w[:4])
    return TwoLevelReduction(omega0_eff=omega0, charge_matrix_element=elem,
                             e_levels=levels, near_degenerate=near)


def write_cpb_csv(path, specs: Sequence[CpbSpec]) -> None:
    """One row per spec: ec, ej, ng, e_level_0..3, overlap_g, overlap_e,
    omega0_eff, charge_matrix_element.  Overlaps are blank off sweet spot."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ec", "ej", "ng",
                         "e_level_0", "e_level_1", "e_level_2", "e_level_3",
                         "overlap_g", "overlap_e", "omega0_eff",
                         "charge_matrix_element"])
        for spec in specs:
            red = two_level_reduction(spec)
            at_sweet = abs(spec.ng - math.floor(spec.ng) - 0.5) <= 1e-9
            if at_sweet:
                rep = verify_sweet_spot_states(spec)
                og, oe = repr(rep.overlap_g), repr(rep.overlap_e)
            else:
                og = oe = ""
            writer.writerow([repr(spec.ec), repr(spec.ej), repr(spec.ng),
                             *[repr(e) for e in red.e_levels],
                             og, oe, repr(red.omega0_eff),
                             repr(red.charge_matrix_element)])
