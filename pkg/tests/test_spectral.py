import time

import numpy as np
import pytest

from fairspect.graph import from_edges
from fairspect.spectral import (
    ConvergenceError,
    dense_eigendecomposition,
    matvec,
    rayleigh_quotient,
    spectral_gap,
    subspace_residual,
    top_m_eigenpairs,
)
from fairspect.synthetic import SyntheticSpec, gen_synthetic


def random_graph(n, p, seed):
    spec = SyntheticSpec(kind="erdos_renyi", n=n, params={"p": p}, seed=seed)
    graph, _, _, _ = gen_synthetic(spec)
    return graph


class TestMatvec:
    def test_hand_sum_on_triangle(self, k3):
        y = matvec(k3, np.array([1.0, 0.0, 1.0]))
        assert np.allclose(y, [1.0, 2.0, 1.0])

    def test_zero_vector(self, c4):
        assert np.allclose(matvec(c4, np.zeros(4)), 0.0)

    def test_all_ones_gives_degrees(self, c4):
        assert np.allclose(matvec(c4, np.ones(4)), [2.0, 2.0, 2.0, 2.0])

    def test_length_mismatch(self, k3):
        with pytest.raises(ValueError):
            matvec(k3, np.ones(4))


class TestDenseOracle:
    def test_triangle_spectrum(self, k3):
        trunc = dense_eigendecomposition(k3)
        assert np.allclose(trunc.eigenvalues, [2.0, -1.0, -1.0])
        assert np.allclose(np.abs(trunc.eigenvectors[:, 0]), 1 / np.sqrt(3))

    def test_cycle_spectrum(self, c4):
        trunc = dense_eigendecomposition(c4)
        assert np.allclose(trunc.eigenvalues, [2.0, -2.0, 0.0, 0.0], atol=1e-12)

    def test_edgeless_graph(self):
        g = from_edges(3, [])
        trunc = dense_eigendecomposition(g)
        assert np.allclose(trunc.eigenvalues, 0.0)
        gram = trunc.eigenvectors.T @ trunc.eigenvectors
        assert np.allclose(gram, np.eye(3), atol=1e-12)

    def test_size_cap(self):
        g = from_edges(3, [(0, 1)])
        with pytest.raises(ValueError, match="cap"):
            dense_eigendecomposition(g, oracle_cap=2)


class TestTopMEigenpairs:
    def test_triangle_top_two(self, k3):
        trunc = top_m_eigenpairs(k3, 2)
        assert np.allclose(trunc.eigenvalues, [2.0, -1.0], atol=1e-9)
        p1 = trunc.eigenvectors[:, 0]
        assert np.allclose(p1, np.ones(3) / np.sqrt(3), atol=1e-9)

    def test_degenerate_dominant_pair(self, two_triangles):
        trunc = top_m_eigenpairs(two_triangles, 2)
        assert np.allclose(trunc.eigenvalues, [2.0, 2.0], atol=1e-9)
        gram = trunc.eigenvectors.T @ trunc.eigenvectors
        assert np.abs(gram - np.eye(2)).max() <= 1e-8
        # the dominant eigenspace is spanned by the per-component constants
        oracle = dense_eigendecomposition(two_triangles)
        for i in range(2):
            assert subspace_residual(trunc.eigenvectors[:, i],
                                     trunc.eigenvalues[i], oracle) <= 1e-6

    def test_cycle_magnitude_tie_prefers_positive(self, c4):
        trunc = top_m_eigenpairs(c4, 1)
        assert np.allclose(trunc.eigenvalues, [2.0], atol=1e-9)

    def test_bad_m(self, k3):
        with pytest.raises(ValueError):
            top_m_eigenpairs(k3, 0)
        with pytest.raises(ValueError):
            top_m_eigenpairs(k3, 4)

    def test_convergence_error_carries_residuals(self):
        g = random_graph(40, 0.3, seed=9)
        with pytest.raises(ConvergenceError) as excinfo:
            top_m_eigenpairs(g, 3, tol=1e-30, max_iter=3)
        assert excinfo.value.residuals.shape == (3,)
        assert np.all(excinfo.value.residuals > 0)

    def test_single_node(self):
        g = from_edges(1, [])
        trunc = top_m_eigenpairs(g, 1)
        assert trunc.eigenvalues.tolist() == [0.0]
        assert abs(abs(trunc.eigenvectors[0, 0]) - 1.0) < 1e-12

    def test_high_multiplicity_dominant(self):
        # forty disjoint 5-cliques: dominant eigenvalue 4 with multiplicity 40
        edges = []
        for c in range(40):
            base = 5 * c
            edges += [(base + i, base + j) for i in range(5) for j in range(i + 1, 5)]
        g = from_edges(200, edges)
        trunc = top_m_eigenpairs(g, 10)
        assert np.allclose(trunc.eigenvalues, 4.0, atol=1e-9)
        gram = trunc.eigenvectors.T @ trunc.eigenvectors
        assert np.abs(gram - np.eye(10)).max() <= 1e-8

    def test_near_degenerate_dominant_pair(self):
        # two 20-cliques joined by one bridge edge: dominant pair split only
        # by the bridge perturbation
        edges = []
        for base in (0, 20):
            edges += [(base + i, base + j) for i in range(20) for j in range(i + 1, 20)]
        edges.append((19, 20))
        g = from_edges(40, edges)
        trunc = top_m_eigenpairs(g, 4)
        oracle = dense_eigendecomposition(g)
        assert np.allclose(trunc.eigenvalues, oracle.eigenvalues[:4], atol=1e-9)
        for i in range(4):
            assert subspace_residual(trunc.eigenvectors[:, i],
                                     trunc.eigenvalues[i], oracle) <= 1e-6


class TestOracleEquivalence:
    def test_random_graphs_match_oracle(self):
        rng = np.random.default_rng(123)
        started = time.perf_counter()
        for trial in range(15):
            n = int(rng.integers(10, 120))
            p = float(rng.uniform(0.1, 0.6))
            m = int(rng.integers(1, min(8, n) + 1))
            g = random_graph(n, p, seed=int(rng.integers(0, 2**31)))
            trunc = top_m_eigenpairs(g, m)
            oracle = dense_eigendecomposition(g)
            for i in range(m):
                lam, lam_oracle = trunc.eigenvalues[i], oracle.eigenvalues[i]
                assert abs(lam - lam_oracle) <= 1e-8 * max(1.0, abs(lam_oracle))
                assert subspace_residual(trunc.eigenvectors[:, i], lam, oracle) <= 1e-6
        assert time.perf_counter() - started < 20.0

    def test_rayleigh_consistency(self):
        g = random_graph(60, 0.25, seed=4)
        trunc = top_m_eigenpairs(g, 5)
        for i in range(5):
            rq = rayleigh_quotient(g, trunc.eigenvectors[:, i])
            assert abs(rq - trunc.eigenvalues[i]) <= 1e-8

    def test_orthonormal_columns(self):
        g = random_graph(80, 0.2, seed=5)
        trunc = top_m_eigenpairs(g, 6)
        gram = trunc.eigenvectors.T @ trunc.eigenvectors
        assert np.abs(gram - np.eye(6)).max() <= 1e-8

    def test_sign_convention_reproducible_for_simple_eigenvalues(self):
        g = random_graph(50, 0.3, seed=6)
        oracle = dense_eigendecomposition(g)
        trunc = top_m_eigenpairs(g, 4)
        for i in range(4):
            gaps = np.abs(oracle.eigenvalues - trunc.eigenvalues[i])
            if np.sort(gaps)[1] < 1e-6:  # skip (near-)degenerate eigenvalues
                continue
            assert np.allclose(trunc.eigenvectors[:, i],
                               oracle.eigenvectors[:, i], atol=1e-6)

    def test_determinism(self):
        g = random_graph(70, 0.2, seed=8)
        a = top_m_eigenpairs(g, 5, seed=1)
        b = top_m_eigenpairs(g, 5, seed=1)
        assert np.array_equal(a.eigenvalues, b.eigenvalues)
        assert np.array_equal(a.eigenvectors, b.eigenvectors)


class TestSpectralGap:
    def test_triangle(self, k3):
        assert abs(spectral_gap(top_m_eigenpairs(k3, 2)) - 0.5) < 1e-9

    def test_repeated_dominant(self, two_triangles):
        assert abs(spectral_gap(top_m_eigenpairs(two_triangles, 2)) - 1.0) < 1e-9

    def test_star_bipartite_ratio_is_one(self, star4):
        trunc = dense_eigendecomposition(star4)
        assert np.allclose(np.abs(trunc.eigenvalues[:2]), np.sqrt(3.0))
        assert abs(spectral_gap(trunc) - 1.0) < 1e-9

    def test_errors(self, k3):
        with pytest.raises(ValueError):
            spectral_gap(top_m_eigenpairs(k3, 1))
        edgeless = dense_eigendecomposition(from_edges(3, []))
        with pytest.raises(ValueError):
            spectral_gap(edgeless)
