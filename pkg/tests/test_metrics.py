import numpy as np
import pytest

from edmc.linalg import InvalidInputError, center_columns
from edmc.metrics import (
    ground_truth_stats,
    quotient_dist,
    recovery_error,
    spectral_error,
    spectral_error_factored,
)


class TestQuotientDist:
    def test_identical(self):
        rng = np.random.default_rng(0)
        P = rng.standard_normal((10, 3))
        assert quotient_dist(P, P) < 1e-10

    def test_orbit(self):
        rng = np.random.default_rng(1)
        P = rng.standard_normal((10, 3))
        R, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        assert quotient_dist(P @ R, P) < 1e-9

    def test_upper_bounded_by_perturbation(self):
        rng = np.random.default_rng(2)
        P = rng.standard_normal((12, 2))
        E = 0.1 * rng.standard_normal((12, 2))
        assert quotient_dist(P + E, P) <= np.linalg.norm(E) + 1e-10


class TestSpectralError:
    def test_zero(self):
        G = np.eye(5)
        assert spectral_error(G, G) == pytest.approx(0.0, abs=1e-12)

    def test_double(self):
        rng = np.random.default_rng(3)
        P = rng.standard_normal((8, 2))
        G = P @ P.T
        assert spectral_error(2 * G, G) == pytest.approx(1.0, rel=1e-10)

    def test_rank_one_update_matches_eig_oracle(self):
        rng = np.random.default_rng(4)
        P = rng.standard_normal((15, 3))
        G = P @ P.T
        u = rng.standard_normal(15)
        Ghat = G + np.outer(u, u)
        oracle = np.max(np.abs(np.linalg.eigvalsh(Ghat - G))) / np.max(
            np.abs(np.linalg.eigvalsh(G))
        )
        assert spectral_error(Ghat, G) == pytest.approx(oracle, rel=1e-7)

    def test_zero_reference_rejected(self):
        with pytest.raises(InvalidInputError):
            spectral_error(np.eye(3), np.zeros((3, 3)))

    def test_factored_matches_dense(self):
        rng = np.random.default_rng(5)
        Phat = rng.standard_normal((40, 3))
        Pstar = rng.standard_normal((40, 3))
        dense = spectral_error(Phat @ Phat.T, Pstar @ Pstar.T)
        assert spectral_error_factored(Phat, Pstar) == pytest.approx(dense, rel=1e-8)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(6)
        P = rng.standard_normal((10, 2))
        G = P @ P.T
        Ghat = G + 0.1 * np.eye(10)
        perm = rng.permutation(10)
        assert spectral_error(Ghat, G) == pytest.approx(
            spectral_error(Ghat[np.ix_(perm, perm)], G[np.ix_(perm, perm)]), rel=1e-10
        )


class TestRecoveryError:
    def test_zero(self):
        D = np.ones((4, 4)) - np.eye(4)
        assert recovery_error(D, D) == 0.0

    def test_all_zero_estimate(self):
        D = np.ones((4, 4)) - np.eye(4)
        assert recovery_error(np.zeros((4, 4)), D) == pytest.approx(1.0)

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((9, 9))
        B = rng.standard_normal((9, 9)) + 1.0
        oracle = np.sqrt(np.sum((A - B) ** 2) / np.sum(B**2))
        assert recovery_error(A, B) == pytest.approx(oracle, rel=1e-12)

    def test_zero_reference_rejected(self):
        with pytest.raises(InvalidInputError):
            recovery_error(np.eye(3), np.zeros((3, 3)))


class TestGroundTruthStats:
    def test_perfectly_incoherent_circle(self):
        th = 2 * np.pi * np.arange(40) / 40
        P = center_columns(np.column_stack([np.cos(th), np.sin(th)]))
        stats = ground_truth_stats(P, 2)
        assert stats.mu == pytest.approx(1.0, abs=1e-9)
        assert stats.kappa == pytest.approx(1.0, abs=1e-9)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(8)
        P = center_columns(rng.standard_normal((50, 3)))
        stats = ground_truth_stats(P, 3)
        G = P @ P.T
        w, V = np.linalg.eigh(G)
        w, V = w[::-1], V[:, ::-1]
        n, r = 50, 3
        mu_u = n / r * np.max(np.sum(V[:, :r] ** 2, axis=1))
        mu_p = n / (r * w[0]) * np.max(np.sum(P**2, axis=1))
        assert stats.sigma1 == pytest.approx(w[0], rel=1e-9)
        assert stats.sigma_r == pytest.approx(w[r - 1], rel=1e-9)
        assert stats.mu == pytest.approx(max(mu_u, mu_p), rel=1e-9)

    def test_mu_range(self):
        rng = np.random.default_rng(9)
        for t in range(10):
            P = center_columns(rng.standard_normal((30, 2)))
            mu = ground_truth_stats(P, 2).mu
            assert 1.0 - 1e-9 <= mu <= 15.0 + 1e-9  # [1, n/r]

    def test_rotation_invariance(self):
        rng = np.random.default_rng(10)
        P = center_columns(rng.standard_normal((25, 3)))
        R, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        a = ground_truth_stats(P, 3)
        b = ground_truth_stats(P @ R, 3)
        assert a.mu == pytest.approx(b.mu, abs=1e-10)
        assert a.kappa == pytest.approx(b.kappa, abs=1e-10)
        assert a.sigma1 == pytest.approx(b.sigma1, rel=1e-10)

    def test_scaling_law(self):
        rng = np.random.default_rng(11)
        P = center_columns(rng.standard_normal((25, 2)))
        a = ground_truth_stats(P, 2)
        b = ground_truth_stats(4.0 * P, 2)
        assert b.sigma1 == pytest.approx(16.0 * a.sigma1, rel=1e-10)
        assert b.mu == pytest.approx(a.mu, rel=1e-10)
        assert b.kappa == pytest.approx(a.kappa, rel=1e-10)

    def test_rank_deficient_rejected(self):
        P = np.zeros((10, 2))
        P[:, 0] = np.arange(10) - 4.5
        with pytest.raises(InvalidInputError):
            ground_truth_stats(P, 2)
