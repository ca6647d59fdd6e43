import math

import numpy as np
import pytest

from edmc.linalg import InvalidInputError, center_columns, procrustes_align
from edmc.metrics import ground_truth_stats
from edmc.ops import (
    apply_pomega,
    adjoint_g,
    draw_mask,
    forward_edm,
    gram_from_edm,
    sample_distances,
)
from edmc.solver import (
    DegenerateStepError,
    DivergenceError,
    SolverConfig,
    TrimConfig,
    apgd,
    bb_step,
    estimate_params,
    osmds_init,
    pseudo_gradient,
    sstress_cost,
    sstress_gd,
    sstress_gradient,
    trim,
)


def make_instance(n, r, p, seed):
    rng = np.random.default_rng(seed)
    Pstar = center_columns(rng.standard_normal((n, r)))
    mask = draw_mask(n, p, seed + 1000)
    return Pstar, sample_distances(Pstar, mask)


class TestOsmdsInit:
    def test_full_sampling_exact(self):
        Pstar, data = make_instance(40, 3, 1.0, 0)
        Phat = osmds_init(data, 3)
        G = Pstar @ Pstar.T
        np.testing.assert_allclose(
            Phat @ Phat.T, G, atol=1e-9 * np.linalg.norm(G)
        )

    def test_matches_dense_oracle(self):
        Pstar, data = make_instance(30, 2, 0.5, 1)
        Phat = osmds_init(data, 2)
        n, p = 30, data.mask.p
        J = np.eye(n) - np.ones((n, n)) / n
        S = -0.5 / p * J @ data.to_sparse().toarray() @ J
        w, V = np.linalg.eigh(S)
        w, V = w[::-1], V[:, ::-1]
        oracle = (V[:, :2] * np.clip(w[:2], 0, None)) @ V[:, :2].T
        np.testing.assert_allclose(Phat @ Phat.T, oracle, atol=1e-9)

    def test_output_centered(self):
        _, data = make_instance(50, 3, 0.4, 2)
        Phat = osmds_init(data, 3)
        np.testing.assert_allclose(Phat.mean(axis=0), 0.0, atol=1e-9)

    def test_zero_distances(self):
        mask = draw_mask(10, 1.0, 0)
        data = sample_distances(np.zeros((10, 2)), mask)
        np.testing.assert_allclose(osmds_init(data, 2), 0.0, atol=1e-12)


class TestTrim:
    def cfg(self, mu, sigma1, c_ip=1.0, r=2):
        return SolverConfig(
            r=r, trim=TrimConfig(enabled=True, mu=mu, sigma1=sigma1, c_ip=c_ip)
        )

    def test_under_cap_unchanged(self):
        rng = np.random.default_rng(0)
        P = 0.01 * rng.standard_normal((20, 2))
        out = trim(P, self.cfg(mu=1.0, sigma1=100.0))
        np.testing.assert_array_equal(out, P)

    def test_single_row_halved(self):
        n, r = 16, 2
        mu, sigma1 = 1.0, 4.0
        tau = math.sqrt(mu * r * sigma1 / n)
        P = np.full((n, r), tau / 10)
        P[3] = [2 * tau, 0.0]
        out = trim(P, self.cfg(mu=mu, sigma1=sigma1))
        np.testing.assert_allclose(out[3], [tau, 0.0], atol=1e-14)
        np.testing.assert_array_equal(out[:3], P[:3])

    def test_projection_oracle(self):
        rng = np.random.default_rng(1)
        P = rng.standard_normal((30, 3)) * 3
        cfg = SolverConfig(
            r=3, trim=TrimConfig(enabled=True, mu=1.5, sigma1=2.0, c_ip=1.2)
        )
        tau = 1.2 * math.sqrt(1.5 * 3 * 2.0 / 30)
        out = trim(P, cfg)
        norms = np.linalg.norm(out, axis=1)
        assert np.all(norms <= tau * (1 + 1e-12))
        for i in range(30):
            ni = np.linalg.norm(P[i])
            expected = P[i] if ni <= tau else P[i] * tau / ni
            np.testing.assert_allclose(out[i], expected, atol=1e-13)

    def test_c_ip_validation(self):
        with pytest.raises(InvalidInputError):
            TrimConfig(enabled=True, mu=1.0, sigma1=1.0, c_ip=0.5)


class TestPseudoGradient:
    def test_zero_at_truth(self):
        Pstar, data = make_instance(25, 2, 0.5, 3)
        g = pseudo_gradient(Pstar, data)
        np.testing.assert_allclose(g, 0.0, atol=1e-12)

    def test_full_mask_population_gradient(self):
        Pstar, data = make_instance(20, 2, 1.0, 4)
        rng = np.random.default_rng(5)
        P = Pstar + 0.2 * center_columns(rng.standard_normal((20, 2)))
        g = pseudo_gradient(P, data)
        pop = 2.0 * (P @ P.T - Pstar @ Pstar.T) @ P
        np.testing.assert_allclose(
            g, pop, atol=1e-10 * np.linalg.norm(pop)
        )

    def test_matches_dense_operator_path(self):
        rng = np.random.default_rng(6)
        for t in range(20):
            n = int(rng.integers(10, 120))
            r = int(rng.integers(1, 4))
            Pstar, data = make_instance(n, r, 0.4, 100 + t)
            P = Pstar + 0.3 * rng.standard_normal((n, r))
            sparse_path = pseudo_gradient(P, data)
            resid = forward_edm(P @ P.T) - forward_edm(Pstar @ Pstar.T)
            dense = (
                2.0
                / data.mask.p
                * gram_from_edm(apply_pomega(resid, data.mask).toarray())
                @ P
            )
            np.testing.assert_allclose(
                sparse_path, dense, atol=1e-10 * max(1.0, np.linalg.norm(dense))
            )


class TestSstress:
    def test_gradient_zero_at_truth(self):
        Pstar, data = make_instance(15, 2, 0.6, 7)
        np.testing.assert_allclose(sstress_gradient(Pstar, data), 0.0, atol=1e-12)

    def test_finite_differences(self):
        rng = np.random.default_rng(8)
        Pstar, data = make_instance(15, 2, 0.6, 8)
        P = Pstar + 0.4 * rng.standard_normal((15, 2))
        grad = sstress_gradient(P, data)
        fd = np.zeros_like(P)
        h = 1e-5
        for a in range(15):
            for b in range(2):
                Pp, Pm = P.copy(), P.copy()
                Pp[a, b] += h
                Pm[a, b] -= h
                fd[a, b] = (sstress_cost(Pp, data) - sstress_cost(Pm, data)) / (2 * h)
        assert np.linalg.norm(grad - fd) <= 1e-5 * np.linalg.norm(fd)

    def test_empty_mask_zero(self):
        # a mask can come out empty at tiny p; gradient must be zero then
        mask = draw_mask(30, 1e-9, 0)
        if len(mask) == 0:
            data = sample_distances(np.zeros((30, 2)), mask)
            np.testing.assert_allclose(
                sstress_gradient(np.ones((30, 2)), data), 0.0
            )


class TestBbStep:
    def cfg(self, **kw):
        return SolverConfig(r=2, step_rule="bb", **kw)

    def test_equal_inputs_give_one(self):
        S = np.ones((4, 2))
        assert bb_step(S, S, 0, self.cfg()) == pytest.approx(1.0)
        assert bb_step(S, S, 1, self.cfg()) == pytest.approx(1.0)

    def test_eta_max_cap(self):
        S = np.ones((4, 2))
        assert bb_step(S, 0.01 * S, 0, self.cfg(eta_max=5.0)) == pytest.approx(5.0)

    def test_negative_step_allowed_without_eta_min(self):
        S = np.ones((4, 2))
        eta = bb_step(S, -S, 0, self.cfg())
        assert eta == pytest.approx(-1.0)

    def test_eta_min_clamp(self):
        S = np.ones((4, 2))
        eta = bb_step(S, 100 * S, 1, self.cfg(eta_max=1.0, eta_min=0.05))
        assert eta == pytest.approx(0.05)

    def test_parity_formulas(self):
        rng = np.random.default_rng(9)
        S = rng.standard_normal((5, 2))
        Dg = rng.standard_normal((5, 2))
        sd = float(np.sum(S * Dg))
        even = bb_step(S, Dg, 2, self.cfg(eta_max=1e9))
        odd = bb_step(S, Dg, 3, self.cfg(eta_max=1e9))
        assert even == pytest.approx(float(np.sum(S * S)) / sd)
        assert odd == pytest.approx(sd / float(np.sum(Dg * Dg)))

    def test_degenerate(self):
        S = np.ones((3, 2))
        with pytest.raises(DegenerateStepError):
            bb_step(S, np.zeros((3, 2)), 0, self.cfg())
        with pytest.raises(DegenerateStepError):
            bb_step(S, np.zeros((3, 2)), 1, self.cfg())


class TestApgd:
    def test_full_sampling_fixed_step(self):
        Pstar, data = make_instance(100, 2, 1.0, 10)
        sigma1 = ground_truth_stats(Pstar, 2).sigma1
        cfg = SolverConfig(
            r=2, step_rule="fixed", eta=0.25 / sigma1, tol_grad=1e-6, max_iters=1000,
            record_oracle=True,
        )
        res = apgd(data, cfg, oracle=Pstar)
        assert res.trajectory.termination_reason == "gradient-tol"
        assert res.trajectory.rel_err[-1] < 1e-6

    def test_bb_recovers(self):
        Pstar, data = make_instance(120, 2, 0.4, 11)
        stats = ground_truth_stats(Pstar, 2)
        cfg = SolverConfig(
            r=2, step_rule="bb",
            trim=TrimConfig(enabled=True, mu=stats.mu, sigma1=stats.sigma1),
        )
        res = apgd(data, cfg)
        D = forward_edm(res.points @ res.points.T)
        Dstar = forward_edm(Pstar @ Pstar.T)
        re = np.linalg.norm(D - Dstar) / np.linalg.norm(Dstar)
        assert re < 1e-5

    def test_trajectory_lengths_consistent(self):
        Pstar, data = make_instance(60, 2, 0.5, 12)
        cfg = SolverConfig(r=2, record_oracle=True, max_iters=50, tol_grad=1e-12)
        res = apgd(data, cfg, oracle=Pstar)
        t = res.trajectory
        assert len(t.g1) == len(t.g2) == len(t.rel_err) == len(t.dist) == len(t.eta)
        assert res.iterations == len(t.g1)
        assert all(v >= 0 for v in t.g1)

    def test_oracle_requires_truth(self):
        _, data = make_instance(20, 2, 0.5, 13)
        cfg = SolverConfig(r=2, record_oracle=True)
        with pytest.raises(InvalidInputError):
            apgd(data, cfg)

    def test_divergence_error(self):
        Pstar, data = make_instance(40, 2, 0.5, 14)
        cfg = SolverConfig(r=2, step_rule="fixed", eta=10.0, max_iters=500)
        with pytest.raises(DivergenceError) as exc_info:
            apgd(data, cfg)
        assert exc_info.value.last_iterate is not None
        assert np.all(np.isfinite(exc_info.value.last_iterate))

    def test_deterministic(self):
        Pstar, data = make_instance(50, 2, 0.5, 15)
        cfg = SolverConfig(r=2)
        t1 = apgd(data, cfg).trajectory
        t2 = apgd(data, cfg).trajectory
        assert t1.g1 == t2.g1 and t1.eta == t2.eta  # bitwise

    def test_trajectory_csv(self, tmp_path):
        Pstar, data = make_instance(30, 2, 0.6, 16)
        cfg = SolverConfig(r=2, record_oracle=True, max_iters=20, tol_grad=1e-14)
        res = apgd(data, cfg, oracle=Pstar)
        path = tmp_path / "traj.csv"
        res.trajectory.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,g1,g2,r,dist,eta"
        assert len(lines) == 1 + res.iterations

    def test_trajectory_csv_empty_oracle_fields(self, tmp_path):
        _, data = make_instance(30, 2, 0.6, 17)
        res = apgd(data, SolverConfig(r=2, max_iters=10, tol_grad=1e-14))
        path = tmp_path / "traj.csv"
        res.trajectory.to_csv(path)
        first = path.read_text().splitlines()[1].split(",")
        assert first[2] == "" and first[3] == "" and first[4] == ""


class TestContraction:
    def test_contraction_region_monotone_decrease(self):
        # start inside the contraction region, small fixed step: the quotient
        # distance must decrease monotonically
        n, r, p = 300, 2, 0.5
        failures = 0
        for t in range(3):
            rng = np.random.default_rng(200 + t)
            Pstar = center_columns(rng.standard_normal((n, r)))
            stats = ground_truth_stats(Pstar, r)
            mask = draw_mask(n, p, 300 + t)
            data = sample_distances(Pstar, mask)
            E = center_columns(rng.standard_normal((n, r)))
            target_sq = 0.5 * stats.sigma_r / (80.0 / 7.0)
            P0 = Pstar + E * math.sqrt(target_sq) / np.linalg.norm(E)
            eta = 1.0 / (200.0 * stats.sigma1 * stats.mu * r * stats.kappa)
            cfg = SolverConfig(
                r=r, step_rule="fixed", eta=eta, max_iters=200, tol_grad=1e-14,
                trim=TrimConfig(enabled=True, mu=stats.mu, sigma1=stats.sigma1),
                record_oracle=True,
            )
            res = apgd(data, cfg, oracle=Pstar, init=P0)
            d = np.array(res.trajectory.dist)
            if not np.all(np.diff(d) <= 1e-12 * d[0]):
                failures += 1
        assert failures == 0


class TestSstressGd:
    def test_full_sampling_converges(self):
        Pstar, data = make_instance(60, 2, 1.0, 18)
        cfg = SolverConfig(r=2, step_rule="bb", max_iters=1000)
        res = sstress_gd(data, cfg)
        D = forward_edm(res.points @ res.points.T)
        Dstar = forward_edm(Pstar @ Pstar.T)
        assert np.linalg.norm(D - Dstar) / np.linalg.norm(Dstar) < 1e-6

    def test_gradient_norm_at_stop(self):
        Pstar, data = make_instance(50, 2, 0.6, 19)
        cfg = SolverConfig(r=2, tol_grad=1e-6)
        res = sstress_gd(data, cfg)
        if res.trajectory.termination_reason == "gradient-tol":
            assert np.linalg.norm(sstress_gradient(res.points, data)) <= 1e-6


class TestEstimateParams:
    def test_full_sampling_exact_sigma1(self):
        Pstar, data = make_instance(80, 2, 1.0, 20)
        Phat = osmds_init(data, 2)
        s1, _ = estimate_params(data, Phat, 1.0, 1.0)
        true_s1 = ground_truth_stats(Pstar, 2).sigma1
        assert s1 == pytest.approx(true_s1, rel=1e-9)

    def test_scaling_homogeneity(self):
        Pstar, data = make_instance(60, 2, 0.5, 21)
        Phat = osmds_init(data, 2)
        s1, mu = estimate_params(data, Phat, 1.0, 1.0)
        scaled = sample_distances(3.0 * Pstar, data.mask)
        Phat2 = osmds_init(scaled, 2)
        s1b, mub = estimate_params(scaled, Phat2, 1.0, 1.0)
        assert s1b == pytest.approx(9.0 * s1, rel=1e-6)
        assert mub == pytest.approx(mu, rel=1e-6)

    def test_mu_within_factor_4(self):
        for s in range(20):
            Pstar, data = make_instance(200, 3, 0.3, 400 + s)
            Phat = osmds_init(data, 3)
            _, mu_hat = estimate_params(data, Phat, 1.0, 1.0)
            mu = ground_truth_stats(Pstar, 3).mu
            assert mu / 4 <= mu_hat <= mu * 4


class TestConfigValidation:
    def test_bad_step_rule(self):
        with pytest.raises(InvalidInputError):
            SolverConfig(r=2, step_rule="adam")

    def test_bad_tolerances(self):
        with pytest.raises(InvalidInputError):
            SolverConfig(r=2, tol_grad=0.0)
        with pytest.raises(InvalidInputError):
            SolverConfig(r=2, max_iters=0)

    def test_bad_eta_bounds(self):
        with pytest.raises(InvalidInputError):
            SolverConfig(r=2, step_rule="fixed", eta=-1.0)
        with pytest.raises(InvalidInputError):
            SolverConfig(r=2, eta_min=5.0, eta_max=1.0)
