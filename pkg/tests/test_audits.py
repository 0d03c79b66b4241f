import dataclasses
import math

import numpy as np
import pytest

from sinkmem import (
    ConfigurationError,
    DiscreteMeasure,
    DomainSpec,
    MeasureParams,
    PatternBank,
    RetrievalConfig,
    SinkhornConfig,
    audit_descent_decay,
    audit_fd_gradients,
    audit_fixed_point,
    audit_grad_bound,
    audit_interference,
    audit_mean_bound,
    audit_minimizer_proximity,
    audit_self_ot,
    audit_softmin_lipschitz,
    decay_instance,
    empirical_constants,
    eta_ret,
    suite_bounds,
    suite_descent_decay,
    suite_fixed_point,
    suite_gradients,
    suite_separation,
    summarize,
)
from sinkmem.audits import skipped_report

OT05 = SinkhornConfig(epsilon=0.5, max_iter=4000, tol=1e-12)


def spread_bank(jitter_seed=21, centers=((-4.0, -4.0), (4.0, -4.0), (0.0, 6.0))):
    """Three tight clouds with mean separation near 8 inside a [-8,8]^2 box."""
    gen = np.random.default_rng(jitter_seed)
    patterns = []
    for c in centers:
        supports = np.asarray(c) + gen.uniform(-0.3, 0.3, size=(3, 2))
        patterns.append(
            DiscreteMeasure(weights=gen.dirichlet(np.full(3, 5.0)), supports=supports)
        )
    return PatternBank(
        patterns=tuple(patterns),
        params=MeasureParams(M=3, a_min=0.02, delta_min=0.01),
        domain=DomainSpec.box((-8.0, -8.0), (8.0, 8.0)),
    )


class TestSelfTransportAudit:
    def test_single_atom_exact(self):
        mu = DiscreteMeasure(weights=[1.0], supports=[[0.3, -0.7]])
        rep = audit_self_ot(mu, 0.05, OT05)
        assert rep.passed and rep.kind == "upper"
        assert rep.bound == 0.0
        assert abs(rep.measured) <= 1e-12

    def test_random_measure_under_entropy_ceiling(self):
        gen = np.random.default_rng(0)
        mu = DiscreteMeasure(
            weights=gen.dirichlet(np.ones(30)), supports=gen.uniform(-1, 1, (30, 2))
        )
        rep = audit_self_ot(mu, 0.5, OT05)
        assert rep.passed
        assert rep.details["entropy_bound"] <= rep.details["log_m_bound"] + 1e-15

    def test_distant_atoms_saturate_bound(self):
        # with far-apart atoms the self plan is diagonal and the cost hits
        # eps * entropy of the weights
        mu = DiscreteMeasure(weights=(0.5, 0.5), supports=((0.0, 0.0), (10.0, 0.0)))
        rep = audit_self_ot(mu, 0.05, SinkhornConfig(epsilon=0.05, max_iter=2000, tol=1e-12))
        assert rep.passed
        assert rep.measured == pytest.approx(rep.bound, rel=0.05)


class TestMeanBoundAudit:
    def test_identical_measures(self):
        gen = np.random.default_rng(1)
        mu = DiscreteMeasure(
            weights=gen.dirichlet(np.ones(3)), supports=gen.uniform(-1, 1, (3, 2))
        )
        rep = audit_mean_bound(mu, mu, 0.5, OT05)
        assert rep.passed
        assert rep.bound < 0  # -eps log m with coinciding means
        assert rep.measured == 0.0

    def test_single_atoms_tight(self):
        mu = DiscreteMeasure(weights=[1.0], supports=[[0.0, 0.0]])
        nu = DiscreteMeasure(weights=[1.0], supports=[[3.0, 4.0]])
        rep = audit_mean_bound(mu, nu, 0.5, OT05)
        assert rep.passed
        assert rep.measured == pytest.approx(12.5, abs=1e-10)
        assert rep.bound == pytest.approx(12.5, abs=1e-12)
        assert rep.details["mean_gap_sq"] == pytest.approx(25.0)

    def test_random_pairs(self):
        gen = np.random.default_rng(2)
        for _ in range(20):
            m = int(gen.integers(1, 4))
            mu = DiscreteMeasure(
                weights=gen.dirichlet(np.ones(m)), supports=gen.uniform(-2, 2, (m, 2))
            )
            nu = DiscreteMeasure(
                weights=gen.dirichlet(np.ones(m)), supports=gen.uniform(-2, 2, (m, 2))
            )
            assert audit_mean_bound(mu, nu, 0.5, OT05).passed


class TestSoftminAudit:
    def test_equal_inputs(self):
        rep = audit_softmin_lipschitz([1.0, 2.0], [1.0, 2.0], 50.0)
        assert rep.passed
        assert rep.measured == 0.0 and rep.bound == 0.0

    def test_constant_shift_is_extremal(self):
        z = np.array([0.4, 1.1, 0.9])
        rep = audit_softmin_lipschitz(z, z + 0.37, 7.0)
        assert rep.passed
        assert rep.bound == pytest.approx(0.37)
        assert rep.measured == pytest.approx(0.37, abs=1e-12)

    def test_random_pairs(self):
        gen = np.random.default_rng(3)
        for _ in range(200):
            n = int(gen.integers(1, 6))
            z = gen.normal(size=n) * 3
            zp = z + gen.normal(size=n) * gen.random()
            beta = float(gen.choice([1.0, 50.0, 1000.0]))
            assert audit_softmin_lipschitz(z, zp, beta).passed


class TestGradBoundAudit:
    def test_at_pattern_far_below_bound(self, tiny_bank):
        p = tiny_bank.patterns[0]
        rep = audit_grad_bound(p, p, 1.0, tiny_bank.domain, OT05)
        assert rep.passed
        assert rep.measured < 0.01 * rep.bound

    def test_large_lambda_bound_is_diameter(self, tiny_bank):
        p = tiny_bank.patterns[0]
        rep = audit_grad_bound(p, p, 1e9, tiny_bank.domain, OT05)
        assert rep.bound == pytest.approx(tiny_bank.domain.diameter(), rel=1e-9)

    def test_random_queries(self, tiny_bank):
        gen = np.random.default_rng(4)
        for _ in range(10):
            xi = DiscreteMeasure(
                weights=gen.dirichlet(np.ones(3)), supports=gen.uniform(-3, 3, (3, 2))
            )
            rep = audit_grad_bound(xi, tiny_bank.patterns[1], 1.0, tiny_bank.domain, OT05)
            assert rep.passed


class TestInterferenceAudit:
    def test_single_pattern(self):
        floor, ceiling = audit_interference([0.7], 50.0)
        assert floor.name == "gibbs_weight_floor" and floor.kind == "lower"
        assert ceiling.name == "energy_gap_ceiling" and ceiling.kind == "upper"
        assert floor.passed and floor.bound == 1.0 and floor.measured == 1.0
        assert ceiling.passed and ceiling.bound == 0.0
        assert abs(ceiling.measured) <= 1e-15

    def test_degenerate_gap_is_tight(self):
        floor, ceiling = audit_interference([0.3, 0.3, 0.3, 0.3], 2.0)
        assert floor.passed
        assert floor.bound == pytest.approx(0.25)
        assert floor.measured == pytest.approx(0.25, abs=1e-15)
        assert ceiling.passed
        assert ceiling.bound == pytest.approx(math.log(4) / 2.0)
        assert ceiling.measured == pytest.approx(math.log(4) / 2.0, abs=1e-14)

    def test_random_divergences(self):
        gen = np.random.default_rng(5)
        for _ in range(100):
            n = int(gen.integers(1, 7))
            vals = gen.random(n) * 2
            beta = float(gen.choice([1.0, 10.0, 50.0]))
            for rep in audit_interference(vals, beta):
                assert rep.passed


class TestFixedPointAudit:
    def test_single_pattern_bank(self):
        gen = np.random.default_rng(6)
        p = DiscreteMeasure(
            weights=gen.dirichlet(np.ones(3)), supports=gen.uniform(-1, 1, (3, 2))
        )
        bank = PatternBank(
            patterns=(p,),
            params=MeasureParams(M=3, a_min=0.01, delta_min=0.001),
            domain=DomainSpec.box((-4.0, -4.0), (4.0, 4.0)),
        )
        cfg = RetrievalConfig(beta=50.0, eta=0.01, lam=1.0, max_iter=10)
        rep = audit_fixed_point(bank, 0, cfg, OT05)
        assert rep.passed
        assert rep.bound == 0.0
        assert rep.measured <= 1e-7

    @pytest.mark.parametrize("beta,eta", [(50.0, 0.01), (1.0, 0.001)])
    def test_separated_bank(self, tiny_bank, beta, eta):
        cfg = RetrievalConfig(beta=beta, eta=eta, lam=1.0, max_iter=10)
        for i in range(tiny_bank.n_patterns):
            rep = audit_fixed_point(tiny_bank, i, cfg, OT05)
            assert rep.passed and not rep.skipped
            assert rep.details["empirical_gap"] > 0


class TestMinimizerProximityAudit:
    def test_separated_bank(self, tiny_bank):
        cfg = RetrievalConfig(beta=50.0, eta=0.01, lam=1.0, max_iter=100)
        rep = audit_minimizer_proximity(tiny_bank, 0, cfg, OT05)
        assert rep.passed and not rep.skipped
        assert rep.details["iterations"] >= 1

    def test_bound_shrinks_with_beta(self, tiny_bank):
        # betas soft enough to move the minimizer off the pattern need far
        # more iterations than the certificate is worth; start at beta=5
        bounds = []
        for beta in (5.0, 10.0, 50.0):
            cfg = RetrievalConfig(beta=beta, eta=0.01, lam=1.0, max_iter=100)
            rep = audit_minimizer_proximity(tiny_bank, 1, cfg, OT05)
            assert rep.passed
            bounds.append(rep.bound)
        assert bounds[0] > bounds[1] >= bounds[2]

    def test_unconverged_run_reports_skipped(self, tiny_bank):
        cfg = RetrievalConfig(beta=50.0, eta=0.01, lam=1.0, max_iter=2, stop_tol=0.0)
        rep = audit_minimizer_proximity(tiny_bank, 0, cfg, OT05)
        assert rep.skipped and not rep.passed
        assert "cap" in rep.skip_reason


class TestFdGradientAudit:
    def test_jittered_pattern_matches(self, tiny_bank):
        gen = np.random.default_rng(7)
        p = tiny_bank.patterns[0]
        xi = DiscreteMeasure(
            weights=p.weights, supports=p.supports + 0.1 * gen.standard_normal(p.supports.shape)
        )
        rep = audit_fd_gradients(xi, p, epsilon=0.5)
        assert rep.passed
        assert rep.measured <= 1e-3
        assert rep.details["weight_pairs"]  # simplex-tangent directions checked

    def test_sharp_blur_refused(self, tiny_bank):
        p = tiny_bank.patterns[0]
        rep = audit_fd_gradients(p, p, epsilon=5e-4)
        assert rep.skipped and not rep.passed
        assert "floor" in rep.skip_reason


class TestEtaRet:
    def make_inputs(self):
        pattern = DiscreteMeasure(weights=(0.5, 0.5), supports=((-1.0, 0.0), (1.0, 0.0)))
        dom = DomainSpec.box((-4.0, -4.0), (4.0, 4.0))
        params = MeasureParams(M=2, a_min=0.1, delta_min=0.5)
        return pattern, dom, params

    def test_hand_evaluated_terms(self):
        pattern, dom, params = self.make_inputs()
        res = eta_ret(pattern, delta=0.5, tau=0.2, lam=1.0, dom=dom, params=params,
                      epsilon=0.01)
        D = dom.diameter()
        assert res.boundary_distance == pytest.approx(3.0)
        assert res.min_separation == pytest.approx(2.0)
        assert res.weight_term == pytest.approx(math.log(3.0) / (2 * D * D), rel=1e-12)
        assert res.geometry_term == pytest.approx(0.5 / (2 * D), rel=1e-12)
        assert res.eta_ret == min(res.weight_term, res.geometry_term)
        expected_r = min(
            0.1 * 0.25 / 2 - 0.01 * math.log(2),
            0.2 * 1.5**2 / 4 - 0.01 * math.log(2),
        )
        assert res.r_loc == pytest.approx(expected_r, rel=1e-12)

    def test_tau_at_weight_margin_kills_first_term(self):
        pattern, dom, params = self.make_inputs()
        margin = 0.5 - params.a_min
        res = eta_ret(pattern, delta=0.5, tau=margin * (1 - 1e-10), lam=1.0,
                      dom=dom, params=params, epsilon=0.01)
        assert 0 <= res.weight_term < 1e-8
        assert res.eta_ret == res.weight_term

    def test_infeasible_delta_named(self):
        pattern, dom, params = self.make_inputs()
        with pytest.raises(ConfigurationError, match="delta must satisfy"):
            eta_ret(pattern, delta=0.76, tau=0.2, lam=1.0, dom=dom, params=params,
                    epsilon=0.01)

    def test_infeasible_tau_named(self):
        pattern, dom, params = self.make_inputs()
        with pytest.raises(ConfigurationError, match="tau must satisfy"):
            eta_ret(pattern, delta=0.5, tau=0.4, lam=1.0, dom=dom, params=params,
                    epsilon=0.01)

    def test_atom_separation_must_clear_floor(self):
        pattern = DiscreteMeasure(weights=(0.5, 0.5), supports=((0.0, 0.0), (0.1, 0.0)))
        dom = DomainSpec.box((-4.0, -4.0), (4.0, 4.0))
        params = MeasureParams(M=2, a_min=0.1, delta_min=0.5)
        with pytest.raises(ConfigurationError, match="separation"):
            eta_ret(pattern, delta=0.01, tau=0.2, lam=1.0, dom=dom, params=params,
                    epsilon=0.01)

    def test_boundary_atom_rejected(self):
        pattern = DiscreteMeasure(weights=(0.5, 0.5), supports=((-4.0, 0.0), (1.0, 0.0)))
        dom = DomainSpec.box((-4.0, -4.0), (4.0, 4.0))
        params = MeasureParams(M=2, a_min=0.1, delta_min=0.5)
        with pytest.raises(ConfigurationError, match="strictly inside"):
            eta_ret(pattern, delta=0.5, tau=0.2, lam=1.0, dom=dom, params=params,
                    epsilon=0.01)

    def test_weight_at_floor_rejected(self):
        pattern = DiscreteMeasure(weights=(0.4999, 0.5001), supports=((-1.0, 0.0), (1.0, 0.0)))
        dom = DomainSpec.box((-4.0, -4.0), (4.0, 4.0))
        params = MeasureParams(M=2, a_min=0.49995, delta_min=0.5)
        with pytest.raises(ConfigurationError, match="min weight"):
            eta_ret(pattern, delta=0.5, tau=1e-7, lam=1.0, dom=dom, params=params,
                    epsilon=0.01)


class TestDescentDecayAudit:
    def test_instance_is_deterministic(self):
        b1, q1 = decay_instance(4)
        b2, q2 = decay_instance(4)
        assert b1.n_patterns == 3 and b1.params.M == 4
        assert np.array_equal(q1.supports, q2.supports)
        assert np.array_equal(q1.weights, q2.weights)
        for p, q in zip(b1.patterns, b2.patterns):
            assert np.array_equal(p.supports, q.supports)
        # the query is pattern 0 under a rigid offset
        offsets = q1.supports - b1.patterns[0].supports
        assert np.ptp(offsets, axis=0) == pytest.approx(np.zeros(2), abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 3])
    def test_reports_pass(self, seed):
        mono, fit = audit_descent_decay(seed)
        assert mono.name == "energy_monotone" and mono.passed
        assert fit.name == "decay_linear_fit" and fit.passed and not fit.skipped
        assert fit.details["slope"] < 0
        assert fit.details["r_squared"] >= 0.9

    def test_short_trace_skips_fit(self):
        cfg = RetrievalConfig(beta=50.0, eta=0.05, lam=1.0, max_iter=5)
        mono, fit = audit_descent_decay(0, retr_cfg=cfg)
        assert mono.name == "energy_monotone"
        assert fit.skipped and not fit.passed

    def test_suite_shape(self):
        reports = suite_descent_decay(count=2, base_seed=5)
        assert len(reports) == 4
        assert summarize(reports)["all_passed"]


class TestSuitesAndPlumbing:
    def test_suite_bounds_counts_and_passes(self, tiny_bank):
        reports = suite_bounds(tiny_bank, OT05, seed=3, n_random=5)
        assert len(reports) == 3 + 5 + 5 + 3 + 10
        stats = summarize(reports)
        assert stats["all_passed"]
        assert stats["skipped"] == 0

    def test_suite_gradients(self, tiny_bank):
        reports = suite_gradients(tiny_bank, epsilon=0.5, seed=0, count=1)
        assert len(reports) == 1
        assert reports[0].passed

    def test_suite_separation_on_spread_bank(self):
        bank = spread_bank()
        reports = suite_separation(bank, epsilon=0.5, ot_cfg=OT05, seed=1, probes=2)
        assert len(reports) == 1
        rep = reports[0]
        assert rep.passed and not rep.skipped
        assert rep.details["min_mean_distance"] > rep.bound ** 0.5

    def test_suite_separation_skips_identical_means(self):
        gen = np.random.default_rng(8)
        p = DiscreteMeasure(
            weights=gen.dirichlet(np.ones(3)), supports=gen.uniform(-1, 1, (3, 2))
        )
        bank = PatternBank(
            patterns=(p, p),
            params=MeasureParams(M=3, a_min=0.01, delta_min=0.001),
            domain=DomainSpec.box((-4.0, -4.0), (4.0, 4.0)),
        )
        reports = suite_separation(bank, epsilon=0.5, ot_cfg=OT05, seed=1)
        assert reports[0].skipped and not reports[0].passed

    def test_suite_fixed_point(self, tiny_bank):
        cfg = RetrievalConfig(beta=50.0, eta=0.01, lam=1.0, max_iter=100)
        reports = suite_fixed_point(tiny_bank, cfg, OT05)
        assert len(reports) == 2 * tiny_bank.n_patterns
        assert summarize(reports)["all_passed"]

    def test_digest_tracks_inputs(self):
        mu = DiscreteMeasure(weights=(0.5, 0.5), supports=((0.0, 0.0), (1.0, 0.0)))
        nu = DiscreteMeasure(weights=(0.5, 0.5), supports=((0.0, 0.0), (2.0, 0.0)))
        a = audit_self_ot(mu, 0.5, OT05)
        b = audit_self_ot(mu, 0.5, OT05)
        c = audit_self_ot(nu, 0.5, OT05)
        assert a.inputs_digest == b.inputs_digest
        assert a.inputs_digest != c.inputs_digest

    def test_skipped_never_passes(self):
        rep = skipped_report("anything", "because")
        assert rep.skipped and not rep.passed
        assert rep.skip_reason == "because"

    def test_summarize_counts(self):
        base = audit_softmin_lipschitz([1.0], [1.0], 2.0)
        failing = dataclasses.replace(base, passed=False)
        stats = summarize([base, failing, skipped_report("s", "r")])
        assert stats == {
            "total": 3, "ran": 2, "passed": 1, "failed": 1,
            "skipped": 1, "all_passed": False,
        }

    def test_empirical_constants_use_observed_separation(self, tiny_bank):
        consts = empirical_constants(tiny_bank, epsilon=0.05)
        means = np.stack([p.weights @ p.supports for p in tiny_bank.patterns])
        dists = [
            np.linalg.norm(means[i] - means[j])
            for i in range(3) for j in range(i + 1, 3)
        ]
        assert consts.d_min == pytest.approx(min(dists), abs=1e-12)
        assert consts.delta == pytest.approx(consts.d_min ** 2 / 4)
        assert consts.r == pytest.approx(
            consts.d_min ** 2 / 32 - 0.05 * math.log(3), abs=1e-12
        )
