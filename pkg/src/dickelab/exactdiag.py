"""Finite-N exact diagonalization in the permutation-symmetric sector.

The N-atom Hilbert space is restricted to fully symmetric states, labeled by
occupation vectors (m_0, ..., m_{d-1}) with sum m_j = N, tensored with a
photon Fock space truncated at n_max.  Collective transition operators act
on occupations with bosonic amplitudes sqrt((m_j + 1) m_k), which is exact
inside the symmetric sector.

Basis index convention: index = n_ph * A + atomic_rank where A is the number
of occupation vectors; occupation vectors are ranked so the all-ground state
(N, 0, ..., 0) comes first (descending lexicographic order of the tuple).

The photon parity Pi = (-1)^(n_ph + sum_j j*m_j) commutes with H whenever
every coupled level pair (j, k) has odd k - j (true for chain couplings).
Ground-state solves then run inside each parity sector separately, which
keeps |<Pi>| = 1 even when the two lowest states are almost degenerate, as
they are deep in a superradiant phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConvergenceError, ResourceLimitError
from .model import AtomSpec, DickeModel

DENSE_CUTOFF = 2000
MAX_DIM_DEFAULT = 5_000_000


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------

def _enumerate_occupations(n_atoms: int, d: int) -> np.ndarray:
    """All occupation vectors, descending lex, (N, 0, ..., 0) first."""
    states: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], rem: int, slots: int):
        if slots == 1:
            states.append(prefix + (rem,))
            return
        for v in range(rem, -1, -1):
            rec(prefix + (v,), rem - v, slots - 1)

    rec((), n_atoms, d)
    return np.array(states, dtype=np.int64)


@dataclass(frozen=True)
class SymmetricBasis:
    n_atoms: int
    d: int
    n_max: int
    atomic_states: np.ndarray = field(repr=False)

    @property
    def n_atomic(self) -> int:
        return self.atomic_states.shape[0]

    @property
    def dim(self) -> int:
        return (self.n_max + 1) * self.n_atomic

    def rank(self, m: Sequence[int]) -> int:
        """Position of occupation vector m in the descending-lex ordering."""
        m = tuple(int(v) for v in m)
        if len(m) != self.d or any(v < 0 for v in m) or sum(m) != self.n_atoms:
            raise ValueError(f"not an occupation vector for N={self.n_atoms}, d={self.d}: {m}")
        rank = 0
        rem = self.n_atoms
        for j in range(self.d - 1):
            # states that agree so far but put more atoms in level j come first
            t = rem - m[j] - 1
            slots = self.d - j - 1
            if t >= 0:
                rank += math.comb(t + slots, slots)
            rem -= m[j]
        return rank

    def unrank(self, rank: int) -> tuple[int, ...]:
        if not 0 <= rank < self.n_atomic:
            raise ValueError(f"rank out of range: {rank}")
        m = []
        rem = self.n_atoms
        for j in range(self.d - 1):
            slots = self.d - j - 1
            for v in range(rem, -1, -1):
                block = math.comb(rem - v + slots - 1, slots - 1)
                if rank < block:
                    m.append(v)
                    rem -= v
                    break
                rank -= block
        m.append(rem)
        return tuple(m)

    def index(self, n_ph: int, m: Sequence[int]) -> int:
        if not 0 <= n_ph <= self.n_max:
            raise ValueError(f"photon number out of range: {n_ph}")
        return n_ph * self.n_atomic + self.rank(m)


def build_basis(n_atoms: int, d: int, n_max: int,
                max_dim: int = MAX_DIM_DEFAULT) -> SymmetricBasis:
    if n_atoms < 1 or d < 2 or n_max < 0:
        raise ValueError("need n_atoms >= 1, d >= 2, n_max >= 0")
    n_atomic = math.comb(n_atoms + d - 1, d - 1)
    dim = (n_max + 1) * n_atomic
    if dim > max_dim:
        raise ResourceLimitError(
            f"basis dimension {dim} exceeds max_dim {max_dim} "
            f"(N={n_atoms}, d={d}, n_max={n_max})")
    states = _enumerate_occupations(n_atoms, d)
    states.flags.writeable = False
    return SymmetricBasis(n_atoms=n_atoms, d=d, n_max=n_max, atomic_states=states)


# ---------------------------------------------------------------------------
# Hamiltonian
# ---------------------------------------------------------------------------

def build_hamiltonian(model: DickeModel, basis: SymmetricBasis) -> sp.csr_matrix:
    """Sparse symmetric H in the basis above (both triangles stored)."""
    atom = model.atom
    if atom.d != basis.d or model.n_atoms != basis.n_atoms:
        raise ValueError("model and basis disagree on d or n_atoms")
    A = basis.n_atomic
    n_max = basis.n_max
    dim = basis.dim
    states = basis.atomic_states
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    # diagonal: omega n + sum_j eps_j m_j + kappa (2n + 1)
    e_atom = states @ atom.energies
    ns = np.arange(n_max + 1)
    diag = (model.omega * ns[:, None] + e_atom[None, :]
            + model.kappa * (2.0 * ns[:, None] + 1.0)).ravel()
    idx = np.arange(dim)
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)

    # rank lookup for one-hop moves
    rank_of = {tuple(m): r for r, m in enumerate(states)}

    coef = 1.0 / math.sqrt(model.n_atoms)
    ns1 = np.arange(n_max)          # photon n -> n+1 transitions
    ph1 = np.sqrt(ns1 + 1.0)
    for j in range(atom.d):
        for k in range(j + 1, atom.d):
            lam = atom.couplings[j, k]
            if lam == 0.0:
                continue
            # collective move k -> j with amplitude sqrt((m_j + 1) m_k)
            src, dst, amp = [], [], []
            for r, m in enumerate(states):
                if m[k] >= 1:
                    m2 = list(m)
                    m2[j] += 1
                    m2[k] -= 1
                    src.append(r)
                    dst.append(rank_of[tuple(m2)])
                    amp.append(math.sqrt((m[j] + 1) * m[k]))
            if not src:
                continue
            src = np.array(src)
            dst = np.array(dst)
            amp = np.array(amp)
            v = (lam * coef) * ph1[:, None] * amp[None, :]
            lo = ns1[:, None] * A        # photon row offsets, n side
            hi = (ns1[:, None] + 1) * A  # n+1 side
            # a' (k->j), its transpose, a (k->j), its transpose
            rows.extend([(hi + dst).ravel(), (lo + src).ravel(),
                         (lo + dst).ravel(), (hi + src).ravel()])
            cols.extend([(lo + src).ravel(), (hi + dst).ravel(),
                         (hi + src).ravel(), (lo + dst).ravel()])
            vals.extend([v.ravel()] * 4)

    if model.kappa != 0.0 and n_max >= 2:
        ns2 = np.arange(n_max - 1)
        ph2 = model.kappa * np.sqrt((ns2 + 1.0) * (ns2 + 2.0))
        r = np.arange(A)
        v = np.broadcast_to(ph2[:, None], (n_max - 1, A)).ravel()
        lo = (ns2[:, None] * A + r[None, :]).ravel()
        hi = ((ns2[:, None] + 2) * A + r[None, :]).ravel()
        rows.extend([hi, lo])
        cols.extend([lo, hi])
        vals.extend([v, v])

    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    return H.tocsr()


def parity_compatible(atom: AtomSpec) -> bool:
    """True when Pi = (-1)^(n + sum j m_j) commutes with the coupling term."""
    for j in range(atom.d):
        for k in range(j + 1, atom.d):
            if atom.couplings[j, k] != 0.0 and (k - j) % 2 == 0:
                return False
    return True


def parity_signs(basis: SymmetricBasis) -> np.ndarray:
    """Diagonal of Pi over the full basis, shape (dim,), entries +/-1."""
    weights = basis.atomic_states @ np.arange(basis.d)
    s_atom = np.where(weights % 2 == 0, 1.0, -1.0)
    s_ph = np.where(np.arange(basis.n_max + 1) % 2 == 0, 1.0, -1.0)
    return (s_ph[:, None] * s_atom[None, :]).ravel()


# ---------------------------------------------------------------------------
# ground-state solvers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundState:
    e0: float
    vector: np.ndarray = field(repr=False)
    iterations: int
    residual_norm: float
    seed: int
    method: str


def _true_residual(H, psi: np.ndarray, e0: float) -> float:
    return float(np.linalg.norm(H @ psi - e0 * psi))


def _lanczos_ground(H, tol: float, rng: np.random.Generator,
                    v0: np.ndarray | None, max_iter: int) -> tuple[float, np.ndarray, int, float]:
    dim = H.shape[0]
    if v0 is None:
        q = rng.standard_normal(dim)
    else:
        q = np.array(v0, dtype=float)
    nq = np.linalg.norm(q)
    if nq == 0.0:
        raise ValueError("start vector must be nonzero")
    q /= nq

    cap = min(max_iter + 1, 128)
    Q = np.empty((dim, cap))
    Q[:, 0] = q
    alphas: list[float] = []
    betas: list[float] = []
    best_resid = math.inf

    for i in range(max_iter):
        w = H @ Q[:, i]
        a = float(Q[:, i] @ w)
        alphas.append(a)
        w -= a * Q[:, i]
        if i > 0:
            w -= betas[-1] * Q[:, i - 1]
        # full reorthogonalization, two passes
        w -= Q[:, :i + 1] @ (Q[:, :i + 1].T @ w)
        w -= Q[:, :i + 1] @ (Q[:, :i + 1].T @ w)
        b = float(np.linalg.norm(w))

        theta = sla.eigvalsh_tridiagonal(alphas, betas)
        scale = max(abs(theta[0]), abs(theta[-1]), 1e-300)
        _, S = sla.eigh_tridiagonal(alphas, betas, select="i", select_range=(0, 0))
        resid_est = abs(b * S[-1, 0])
        best_resid = min(best_resid, resid_est)
        if resid_est <= tol * scale or b <= 1e-13 * scale:
            psi = Q[:, :i + 1] @ S[:, 0]
            psi /= np.linalg.norm(psi)
            e0 = float(theta[0])
            resid = _true_residual(H, psi, e0)
            if resid <= max(tol * scale, 10.0 * resid_est) or b <= 1e-13 * scale:
                return e0, psi, i + 1, resid
        if i + 1 >= max_iter:
            break
        if i + 1 == Q.shape[1]:
            grown = np.empty((dim, min(max_iter + 1, 2 * Q.shape[1])))
            grown[:, :Q.shape[1]] = Q
            Q = grown
        betas.append(b)
        Q[:, i + 1] = w / b

    raise ConvergenceError(
        f"Lanczos did not reach tol {tol:g} within {max_iter} iterations",
        best_residual=best_resid)


def ground_state(H, tol: float = 1e-10, seed: int = 0,
                 v0: np.ndarray | None = None, max_iter: int | None = None,
                 dense_cutoff: int = DENSE_CUTOFF,
                 force_lanczos: bool = False) -> GroundState:
    """Lowest eigenpair of a real symmetric matrix (sparse or dense).

    Dimensions at or below dense_cutoff go to a dense eigensolver; larger
    ones run Lanczos with full reorthogonalization from a seeded random
    start vector (or v0 if given).  Convergence is declared when the Ritz
    residual drops below tol relative to the spectral-radius estimate.
    """
    dim = H.shape[0]
    if dim <= dense_cutoff and not force_lanczos:
        dense = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
        w, v = sla.eigh(dense, subset_by_index=(0, 0))
        psi = v[:, 0]
        e0 = float(w[0])
        return GroundState(e0=e0, vector=psi, iterations=0,
                           residual_norm=_true_residual(H, psi, e0),
                           seed=seed, method="dense")
    if max_iter is None:
        max_iter = min(dim, int(10 * math.sqrt(dim)) + 200)
    rng = np.random.default_rng(seed)
    e0, psi, iters, resid = _lanczos_ground(H, tol, rng, v0, max_iter)
    return GroundState(e0=e0, vector=psi, iterations=iters,
                       residual_norm=resid, seed=seed, method="lanczos")


# ---------------------------------------------------------------------------
# observables and drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EDResult:
    e0: float
    photon_density: float
    quad: float
    populations: np.ndarray
    parity: float
    n_max_used: int
    n_atoms: int
    lanczos_iterations: int = 0
    residual_norm: float = math.nan
    seed: int = 0
    method: str = ""
    psi0: np.ndarray | None = field(default=None, repr=False)

    @property
    def e0_per_atom(self) -> float:
        return self.e0 / self.n_atoms


def observables(psi0: np.ndarray, basis: SymmetricBasis, model: DickeModel,
                e0: float = math.nan, lanczos_iterations: int = 0,
                residual_norm: float = math.nan, seed: int = 0,
                method: str = "", keep_state: bool = False) -> EDResult:
    """Per-atom densities of a normalized state: photon number, quadrature
    (a + a')^2, level populations, and photon parity."""
    if model.atom.d != basis.d or model.n_atoms != basis.n_atoms:
        raise ValueError("model and basis disagree on d or n_atoms")
    N = basis.n_atoms
    psi = np.asarray(psi0, dtype=float).reshape(basis.n_max + 1, basis.n_atomic)
    w = psi**2
    p_n = w.sum(axis=1)
    p_r = w.sum(axis=0)
    ns = np.arange(basis.n_max + 1)
    photon = float(ns @ p_n) / N
    quad = float((2.0 * ns + 1.0) @ p_n)
    if basis.n_max >= 2:
        cross = np.sqrt((ns[:-2] + 1.0) * (ns[:-2] + 2.0))
        quad += 2.0 * float(cross @ (psi[:-2] * psi[2:]).sum(axis=1))
    quad /= N
    populations = (p_r @ basis.atomic_states) / N
    populations.flags.writeable = False
    signs = parity_signs(basis)
    parity = float(signs @ (psi.ravel() ** 2))
    return EDResult(
        e0=e0, photon_density=photon, quad=quad, populations=populations,
        parity=parity, n_max_used=basis.n_max, n_atoms=N,
        lanczos_iterations=lanczos_iterations, residual_norm=residual_norm,
        seed=seed, method=method, psi0=np.asarray(psi0, float) if keep_state else None)


def ed_ground(model: DickeModel, n_max: int, tol: float = 1e-10,
              seed: int = 1234, max_dim: int = MAX_DIM_DEFAULT,
              keep_state: bool = False) -> EDResult:
    """Ground state of the finite-N model at a fixed photon cutoff.

    When the coupling graph conserves photon parity the two parity sectors
    are solved independently and the lower one wins (ties go to the even
    sector), which pins |<Pi>| = 1 even for quasi-degenerate pairs.
    """
    basis = build_basis(model.n_atoms, model.atom.d, n_max, max_dim=max_dim)
    H = build_hamiltonian(model, basis)
    if parity_compatible(model.atom):
        signs = parity_signs(basis)
        solves = []
        for offset, sign in enumerate((1.0, -1.0)):
            idx = np.flatnonzero(signs == sign)
            if idx.size == 0:
                continue
            Hs = H[idx][:, idx]
            gs = ground_state(Hs, tol=tol, seed=seed + offset)
            solves.append((gs, idx))
        gs, idx = min(solves, key=lambda pair: pair[0].e0)
        psi = np.zeros(basis.dim)
        psi[idx] = gs.vector
    else:
        gs = ground_state(H, tol=tol, seed=seed)
        psi = gs.vector
    return observables(
        psi, basis, model, e0=gs.e0, lanczos_iterations=gs.iterations,
        residual_norm=gs.residual_norm, seed=seed, method=gs.method,
        keep_state=keep_state)


def converge_cutoff(model: DickeModel, tol_e: float = 1e-8,
                    n_atoms: int | None = None, tol: float = 1e-10,
                    seed: int = 1234, max_dim: int = MAX_DIM_DEFAULT,
                    growth: float = 1.5, max_steps: int = 16,
                    n_max_start: int | None = None,
                    keep_state: bool = False) -> EDResult:
    """Grow n_max geometrically until e0 is stable to tol_e.

    The starting cutoff comes from the mean-field photon density:
    n_max0 = max(8, ceil(4 N x*^2) + 16).
    """
    from .meanfield import minimize

    if n_atoms is not None:
        model = model.with_n_atoms(n_atoms)
    if n_max_start is None:
        x_mf = minimize(model).x_star
        n_max_start = max(8, math.ceil(4.0 * model.n_atoms * x_mf**2) + 16)
    trace: list[tuple[int, float]] = []
    n = int(n_max_start)
    prev: EDResult | None = None
    for _ in range(max_steps):
        try:
            res = ed_ground(model, n, tol=tol, seed=seed, max_dim=max_dim,
                            keep_state=keep_state)
        except ResourceLimitError as exc:
            raise ResourceLimitError(str(exc), trace=trace) from exc
        trace.append((n, res.e0))
        if prev is not None and abs(res.e0 - prev.e0) <= tol_e:
            return res
        prev = res
        n = max(n + 8, math.ceil(growth * n))
    raise ConvergenceError(
        f"e0 not stable to {tol_e:g} after {max_steps} cutoff steps; "
        f"trace: {trace}")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def coupling_pairs(d: int) -> list[tuple[int, int]]:
    return [(j, k) for j in range(d) for k in range(j + 1, d)]


def ed_csv_header(d: int) -> list[str]:
    return (["N", "n_max_used"]
            + [f"coupling_{j}{k}" for j, k in coupling_pairs(d)]
            + ["e0_per_atom", "photon_density", "quad"]
            + [f"pop_{j}" for j in range(d)]
            + ["parity", "residual_norm", "seed"])


def ed_csv_row(result: EDResult, model: DickeModel) -> list:
    return ([result.n_atoms, result.n_max_used]
            + [repr(float(model.atom.couplings[j, k]))
               for j, k in coupling_pairs(model.atom.d)]
            + [repr(result.e0_per_atom), repr(result.photon_density), repr(result.quad)]
            + [repr(float(p)) for p in result.populations]
            + [repr(result.parity), repr(result.residual_norm), result.seed])


def dump_state(path, psi0: np.ndarray, basis: SymmetricBasis) -> None:
    """Binary ground-state dump: nonzero coefficients, largest magnitude first.

    Layout (npz): indices (int64 basis indices, n_ph*A + atomic_rank),
    coefficients (float64), n_atoms, d, n_max.
    """
    psi0 = np.asarray(psi0, dtype=float)
    nz = np.flatnonzero(psi0)
    order = nz[np.argsort(-np.abs(psi0[nz]), kind="stable")]
    np.savez(path, indices=order.astype(np.int64), coefficients=psi0[order],
             n_atoms=basis.n_atoms, d=basis.d, n_max=basis.n_max)
