import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

import oracles

from dickelab import (
    AtomSpec,
    ConvergenceError,
    DickeModel,
    ResourceLimitError,
    build_basis,
    build_hamiltonian,
    converge_cutoff,
    ed_ground,
    ground_state,
    ladder,
    minimize,
    observables,
    parity_compatible,
    parity_signs,
    two_level,
)
from dickelab.exactdiag import dump_state, ed_csv_header, ed_csv_row

LADDER_E_STAR = -7.0 / 9.0   # min_x e(x) for the eps=(0,1,2) ladder at lam12=1.5


def displacement_operator(basis) -> sp.csr_matrix:
    """(a + a') in the packed basis, built independently of the package."""
    A = basis.n_atomic
    n = np.arange(basis.n_max)
    r = np.arange(A)
    rows = ((n[:, None] + 1) * A + r[None, :]).ravel()
    cols = (n[:, None] * A + r[None, :]).ravel()
    vals = np.broadcast_to(np.sqrt(n + 1.0)[:, None], (basis.n_max, A)).ravel()
    X = sp.coo_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))
    return (X + X.T).tocsr()


def random_model(rng) -> DickeModel:
    d = int(rng.integers(2, 5))
    n_atoms = int(rng.integers(1, 6))
    eps = np.sort(np.concatenate([[0.0], rng.uniform(0.3, 2.5, d - 1)]))
    lam = np.zeros((d, d))
    for j in range(d):
        for k in range(j + 1, d):
            lam[j, k] = lam[k, j] = rng.uniform(-1.5, 1.5)
    kappa = float(rng.uniform(0.0, 0.2)) if rng.random() < 0.3 else 0.0
    return DickeModel(float(rng.uniform(0.5, 2.0)), AtomSpec(eps, lam),
                      n_atoms=n_atoms, kappa=kappa)


class TestBasis:
    def test_dimensions(self):
        assert build_basis(1, 2, 1).dim == 4
        assert build_basis(10, 3, 0).dim == 66
        assert build_basis(2, 3, 2).dim == 18

    def test_ground_state_ranked_first(self):
        b = build_basis(5, 3, 0)
        assert tuple(b.atomic_states[0]) == (5, 0, 0)
        assert b.rank((5, 0, 0)) == 0
        assert b.index(0, (5, 0, 0)) == 0

    def test_atomic_count(self):
        for n_atoms in (1, 4, 9):
            for d in (2, 3, 4):
                b = build_basis(n_atoms, d, 0)
                assert b.n_atomic == math.comb(n_atoms + d - 1, d - 1)
                assert len({tuple(m) for m in b.atomic_states}) == b.n_atomic

    def test_bijection(self):
        for n_atoms in (1, 3, 7, 12):
            for d in (2, 3, 4):
                b = build_basis(n_atoms, d, 0)
                for r in range(b.n_atomic):
                    m = b.unrank(r)
                    assert b.rank(m) == r
                    assert tuple(b.atomic_states[r]) == m

    def test_rank_validation(self):
        b = build_basis(3, 2, 1)
        with pytest.raises(ValueError):
            b.rank((2, 0))
        with pytest.raises(ValueError):
            b.unrank(b.n_atomic)
        with pytest.raises(ValueError):
            b.index(2, (3, 0))

    def test_resource_limit(self):
        with pytest.raises(ResourceLimitError, match="max_dim"):
            build_basis(10, 3, 105, max_dim=500)


class TestHamiltonian:
    def test_decoupled_diagonal(self):
        m = two_level(1.0, 1.0, 0.0)
        H = build_hamiltonian(m, build_basis(1, 2, 1))
        np.testing.assert_array_equal(H.toarray(), np.diag([0.0, 1.0, 1.0, 2.0]))

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            m = random_model(rng)
            basis = build_basis(m.n_atoms, m.atom.d, 6)
            H = build_hamiltonian(m, basis)
            assert (H != H.T).nnz == 0

    def test_rabi_against_kron_oracle(self):
        m = two_level(1.0, 0.9, 0.6, kappa=0.05)
        n_max = 40
        H = build_hamiltonian(m, build_basis(1, 2, n_max)).toarray()
        ref = oracles.rabi_hamiltonian(1.0, 0.9, 0.6, n_max, kappa=0.05)
        np.testing.assert_allclose(H, ref, atol=1e-13)
        e0 = ground_state(H).e0
        assert e0 == pytest.approx(float(sla.eigvalsh(ref)[0]), abs=1e-10)

    def test_kappa_only_matches_bogoliubov(self):
        # couplings off: H is the photon mode alone, ground energy known
        atom = AtomSpec([0.0, 1.0], np.zeros((2, 2)))
        m = DickeModel(1.0, atom, kappa=0.3)
        H = build_hamiltonian(m, build_basis(1, 2, 180))
        assert ground_state(H).e0 == pytest.approx(
            oracles.photon_only_ground(1.0, 0.3), abs=1e-9)

    def test_parity_block_structure(self):
        # chain couplings connect only equal-parity basis states
        m = ladder(1.0, 1.0, 2.0, 0.1, 1.2, n_atoms=4)
        assert parity_compatible(m.atom)
        basis = build_basis(4, 3, 8)
        signs = parity_signs(basis)
        H = build_hamiltonian(m, basis).tocoo()
        assert np.all(signs[H.row] == signs[H.col])

    def test_parity_incompatible_when_even_hop_coupled(self):
        atom = AtomSpec([0.0, 1.0, 2.0],
                        [[0.0, 0.0, 0.4], [0.0, 0.0, 0.0], [0.4, 0.0, 0.0]])
        assert not parity_compatible(atom)

    def test_basis_model_mismatch(self):
        with pytest.raises(ValueError, match="disagree"):
            build_hamiltonian(two_level(1.0, 1.0, 0.5), build_basis(2, 3, 4))


class TestGroundState:
    def test_diagonal(self):
        gs = ground_state(np.diag([3.0, 1.0, 2.0]))
        assert gs.e0 == 1.0
        np.testing.assert_allclose(np.abs(gs.vector), [0.0, 1.0, 0.0], atol=1e-14)
        assert gs.method == "dense"

    def test_random_dense_vs_lanczos(self):
        rng = np.random.default_rng(17)
        a = rng.standard_normal((200, 200))
        H = (a + a.T) / 2.0
        dense = ground_state(H)
        lanc = ground_state(H, force_lanczos=True, seed=3)
        assert lanc.method == "lanczos"
        assert abs(lanc.e0 - dense.e0) <= 1e-10 * max(1.0, abs(dense.e0))

    def test_lanczos_on_random_models(self):
        rng = np.random.default_rng(99)
        done = 0
        while done < 8:
            m = random_model(rng)
            n_atomic = math.comb(m.n_atoms + m.atom.d - 1, m.atom.d - 1)
            n_max = min(12, 2000 // n_atomic - 1)
            if n_max < 4:
                continue
            H = build_hamiltonian(m, build_basis(m.n_atoms, m.atom.d, n_max))
            dense = ground_state(H)
            lanc = ground_state(H, force_lanczos=True, seed=done)
            scale = max(1.0, abs(dense.e0))
            assert abs(lanc.e0 - dense.e0) <= 1e-10 * scale
            done += 1

    def test_superradiant_energy_drops(self):
        m = two_level(1.0, 1.0, 1.5, n_atoms=8)
        res = converge_cutoff(m, tol_e=1e-8)
        assert res.e0_per_atom < -0.1

    def test_nonconvergence_reports_residual(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((300, 300))
        H = (a + a.T) / 2.0
        with pytest.raises(ConvergenceError) as exc:
            ground_state(H, force_lanczos=True, max_iter=3)
        assert exc.value.best_residual is not None
        assert exc.value.best_residual > 0.0

    def test_residual_norm_small(self):
        m = ladder(1.0, 1.0, 2.0, 0.0, 1.5, n_atoms=6)
        basis = build_basis(6, 3, 60)
        H = build_hamiltonian(m, basis)
        gs = ground_state(H, force_lanczos=True, seed=0)
        h_scale = float(np.max(np.abs(H.diagonal())))
        assert gs.residual_norm <= 1e-8 * h_scale


class TestObservables:
    def test_trivial_state(self):
        basis = build_basis(3, 3, 2)
        psi = np.zeros(basis.dim)
        psi[basis.index(0, (3, 0, 0))] = 1.0
        m = ladder(1.0, 1.0, 2.0, 0.1, 1.0, n_atoms=3)
        res = observables(psi, basis, m)
        np.testing.assert_allclose(res.populations, [1.0, 0.0, 0.0], atol=0)
        assert res.photon_density == 0.0
        assert res.parity == 1.0

    def test_normal_phase_two_level(self):
        res = ed_ground(two_level(1.0, 1.0, 0.45, n_atoms=8), n_max=20)
        assert res.populations[1] < 0.05
        assert res.photon_density < 0.05
        assert abs(abs(res.parity) - 1.0) <= 1e-10

    def test_superradiant_ladder(self):
        m = ladder(1.0, 1.0, 2.0, 0.0, 1.5, n_atoms=8)
        res = converge_cutoff(m, tol_e=1e-8)
        assert res.populations[0] < 0.3
        assert res.photon_density > 0.5
        assert abs(abs(res.parity) - 1.0) <= 1e-12
        assert abs(res.populations.sum() - 1.0) <= 1e-10

    def test_first_moment_vanishes(self):
        # parity symmetry forces <a + a'> = 0 even deep in the phase
        m = ladder(1.0, 1.0, 2.0, 0.0, 1.5, n_atoms=6)
        res = converge_cutoff(m, tol_e=1e-8, keep_state=True)
        basis = build_basis(6, 3, res.n_max_used)
        X = displacement_operator(basis)
        assert abs(res.psi0 @ (X @ res.psi0)) <= 1e-10

    def test_parity_twirl_leaves_energy(self):
        m = ladder(1.0, 1.0, 2.0, 0.1, 1.3, n_atoms=5)
        res = ed_ground(m, n_max=30, keep_state=True)
        basis = build_basis(5, 3, 30)
        H = build_hamiltonian(m, basis)
        signs = parity_signs(basis)
        flipped = signs * res.psi0
        assert abs(flipped @ (H @ flipped) - res.psi0 @ (H @ res.psi0)) <= 1e-10

    def test_quad_reduces_to_first_moments(self):
        # coherent-free ground state: quad = 2 <n> + 1 + 2 Re<a a> per atom
        basis = build_basis(2, 2, 6)
        psi = np.zeros(basis.dim)
        psi[basis.index(0, (2, 0))] = 1.0
        m = two_level(1.0, 0.5, 0.2, n_atoms=2)
        res = observables(psi, basis, m)
        assert res.quad == pytest.approx(1.0 / 2.0)   # vacuum: <(a+a')^2> = 1


class TestEdGround:
    def test_decoupled_excited_coupling_gap(self):
        # lam12 below critical with lam01 = 0: the photon-atom block around
        # (N, 0, 0) is decoupled and the exact ground energy is 0
        m = ladder(1.0, 1.0, 2.0, 0.0, 0.8, n_atoms=12)
        res = converge_cutoff(m, tol_e=1e-8)
        assert abs(res.e0) <= 1e-10
        np.testing.assert_allclose(res.populations, [1.0, 0.0, 0.0], atol=1e-12)
        assert res.parity == pytest.approx(1.0, abs=1e-12)

    def test_parity_resolved_quasi_degenerate(self):
        # deep superradiant regime: two lowest states nearly degenerate with
        # opposite parity; sector-resolved solves must still pin |parity| = 1
        m = ladder(1.0, 1.0, 2.0, 0.0, 1.5, n_atoms=8)
        res = converge_cutoff(m, tol_e=1e-8)
        assert abs(abs(res.parity) - 1.0) <= 1e-12

    def test_seed_recorded(self):
        res = ed_ground(two_level(1.0, 1.0, 0.3, n_atoms=2), n_max=8, seed=77)
        assert res.seed == 77


class TestConvergeCutoff:
    def test_decoupled_converges_immediately(self):
        m = two_level(1.0, 1.0, 0.0, n_atoms=4)
        res = converge_cutoff(m, tol_e=1e-8)
        assert res.photon_density == 0.0
        assert res.e0 == pytest.approx(0.0, abs=1e-12)

    def test_cutoff_scales_with_mean_field_photon_number(self):
        m = two_level(1.0, 1.0, 0.75, n_atoms=10)
        res = converge_cutoff(m, tol_e=1e-8)
        x2 = oracles.two_level_x_star(1.0, 1.0, 0.75) ** 2
        assert res.n_max_used >= math.ceil(4 * 10 * x2)
        # e0 stable against a further cutoff bump
        again = ed_ground(m, n_max=res.n_max_used + 15)
        assert abs(again.e0 - res.e0) <= 1e-7

    def test_variational_dominance_and_trend(self):
        m = ladder(1.0, 1.0, 2.0, 0.0, 1.5)
        gaps = []
        for n in (4, 6, 8):
            res = converge_cutoff(m, tol_e=1e-8, n_atoms=n)
            assert res.e0_per_atom <= LADDER_E_STAR + 1e-12
            gaps.append(LADDER_E_STAR - res.e0_per_atom)
        assert gaps[0] > gaps[1] > gaps[2] > 0

    def test_resource_limit_carries_trace(self):
        m = ladder(1.0, 1.0, 2.0, 0.0, 1.5, n_atoms=10)
        with pytest.raises(ResourceLimitError) as exc:
            converge_cutoff(m, tol_e=1e-8, max_dim=8000)
        assert len(exc.value.trace) == 1          # first cutoff fit, second did not
        n0, e0 = exc.value.trace[0]
        assert n0 >= 8 and e0 < 0.0


class TestOutputHelpers:
    def test_csv_header_and_row(self):
        m = ladder(1.0, 1.0, 2.0, 0.0, 1.5, n_atoms=4)
        res = converge_cutoff(m, tol_e=1e-8)
        header = ed_csv_header(3)
        assert header == ["N", "n_max_used", "coupling_01", "coupling_02",
                          "coupling_12", "e0_per_atom", "photon_density", "quad",
                          "pop_0", "pop_1", "pop_2", "parity", "residual_norm", "seed"]
        row = ed_csv_row(res, m)
        assert len(row) == len(header)
        assert row[0] == 4
        assert float(row[4]) == 1.5
        assert float(row[5]) == res.e0_per_atom

    def test_dump_state_layout(self, tmp_path):
        m = ladder(1.0, 1.0, 2.0, 0.1, 1.3, n_atoms=3)
        res = ed_ground(m, n_max=20, keep_state=True)
        basis = build_basis(3, 3, 20)
        path = tmp_path / "psi0.npz"
        dump_state(path, res.psi0, basis)
        data = np.load(path)
        assert int(data["n_atoms"]) == 3 and int(data["d"]) == 3
        assert int(data["n_max"]) == 20
        coeffs = data["coefficients"]
        idx = data["indices"]
        assert np.all(np.abs(coeffs[:-1]) >= np.abs(coeffs[1:]))   # magnitude order
        rebuilt = np.zeros(basis.dim)
        rebuilt[idx] = coeffs
        assert np.linalg.norm(rebuilt) == pytest.approx(1.0, abs=1e-12)
        assert abs(rebuilt @ res.psi0) == pytest.approx(1.0, abs=1e-12)
