"""End-to-end acceptance checks, one test per shipped guarantee.

These are the slow, full-pipeline runs; the unit suites cover the same code
at finer grain. Each test finishes with a single PASS line on stdout so a
plain `pytest -v -s` run reads as a checklist.
"""

import json
import time

import numpy as np
import pytest

import oracles
from conftest import save_compact_bank
from sinkmem import (
    DiscreteMeasure,
    DomainSpec,
    RetrievalConfig,
    SinkhornConfig,
)
from sinkmem.audits import (
    audit_fd_gradients,
    audit_fixed_point,
    audit_grad_bound,
    audit_interference,
    audit_mean_bound,
    audit_self_ot,
    audit_softmin_lipschitz,
    suite_descent_decay,
)
from sinkmem.cli import main as cli_main
from sinkmem.experiments import ExperimentConfig, run_experiment
from sinkmem.sampling import (
    SampleConfig,
    capacity,
    sample_patterns,
    separation_stats,
    theory_constants,
)
from sinkmem.sinkhorn import coupling, ot_cost, sinkhorn_divergence, sinkhorn_solve

SECONDS_PER_SEED_CAP = 300.0


def _random_measure(gen, m, concentration=5.0):
    return DiscreteMeasure(
        weights=gen.dirichlet(np.full(m, concentration)),
        supports=gen.uniform(0.0, 1.0, (m, 2)),
    )


def _run_benchmark(which):
    per_seed = []
    slowest = 0.0
    for seed in range(10):
        t0 = time.time()
        result = run_experiment(ExperimentConfig.from_id(which, seed=seed))
        slowest = max(slowest, time.time() - t0)
        per_seed.append((result.shk_successes, result.euclidean_successes))
    return per_seed, slowest


def test_criterion_1_first_benchmark_both_methods_recall():
    per_seed, slowest = _run_benchmark("exp1")
    shk_all = sum(1 for s, _ in per_seed if s == 5)
    euc_all = sum(1 for _, e in per_seed if e == 5)
    assert shk_all >= 8, per_seed
    assert euc_all >= 8, per_seed
    assert slowest <= SECONDS_PER_SEED_CAP
    print(
        f"criterion 1: PASS (transport all-correct {shk_all}/10, "
        f"euclidean all-correct {euc_all}/10, slowest seed {slowest:.0f}s)"
    )


def test_criterion_2_second_benchmark_separates_the_methods():
    per_seed, slowest = _run_benchmark("exp2")
    shk_all = sum(1 for s, _ in per_seed if s == 5)
    euc_failed = sum(1 for _, e in per_seed if e < 5)
    assert shk_all >= 8, per_seed
    assert euc_failed >= 5, per_seed
    assert slowest <= SECONDS_PER_SEED_CAP
    print(
        f"criterion 2: PASS (transport all-correct {shk_all}/10, "
        f"euclidean failing somewhere {euc_failed}/10, slowest seed {slowest:.0f}s)"
    )


def test_criterion_3_solver_matches_dense_oracle():
    gen = np.random.default_rng(314)
    worst = 0.0
    for k in range(50):
        eps = (0.05, 0.5)[k % 2]
        mu = _random_measure(gen, int(gen.integers(1, 4)), concentration=1.0)
        nu = _random_measure(gen, int(gen.integers(1, 4)), concentration=1.0)
        cfg = SinkhornConfig(epsilon=eps, max_iter=10_000, tol=1e-14)
        sol = sinkhorn_solve(mu, nu, cfg)
        f_ref, g_ref = oracles.dense_sinkhorn(
            mu.weights, mu.supports, nu.weights, nu.supports, eps
        )
        p_ref = oracles.dense_coupling(
            mu.weights, mu.supports, nu.weights, nu.supports, f_ref, g_ref, eps
        )
        errors = (
            float(np.max(np.abs(sol.f - f_ref))),
            float(np.max(np.abs(sol.g - g_ref))),
            abs(
                ot_cost(mu, nu, sol, cfg)
                - oracles.dense_ot_cost(mu.weights, mu.supports, nu.weights, nu.supports, eps)
            ),
            float(np.max(np.abs(coupling(mu, nu, sol, cfg).P - p_ref))),
            abs(
                sinkhorn_divergence(mu, nu, cfg)
                - oracles.dense_divergence(mu.weights, mu.supports, nu.weights, nu.supports, eps)
            ),
        )
        worst = max(worst, max(errors))
    assert worst <= 1e-7
    print(f"criterion 3: PASS (worst deviation {worst:.2e} over 50 instances)")


def test_criterion_4_bound_families_hold_on_thousands_of_instances():
    tight_005 = SinkhornConfig(epsilon=0.05, max_iter=2000, tol=1e-12)
    tight_05 = SinkhornConfig(epsilon=0.5, max_iter=2000, tol=1e-12)
    unit_box = DomainSpec.box((0.0, 0.0), (1.0, 1.0))
    gen = np.random.default_rng(2718)
    failures = {}

    reports = []
    for k in range(1000):
        eps, cfg = ((0.05, tight_005), (0.5, tight_05))[k % 2]
        reports.append(audit_self_ot(_random_measure(gen, int(gen.integers(2, 5))), eps, cfg))
    failures["self_transport"] = sum(1 for r in reports if r.skipped or not r.passed)

    reports = []
    for k in range(1000):
        eps, cfg = ((0.05, tight_005), (0.5, tight_05))[k % 2]
        mu = _random_measure(gen, int(gen.integers(1, 4)), concentration=1.0)
        nu = _random_measure(gen, int(gen.integers(1, 4)), concentration=1.0)
        reports.append(audit_mean_bound(mu, nu, eps, cfg))
    failures["mean_separation"] = sum(1 for r in reports if r.skipped or not r.passed)

    reports = []
    for _ in range(1000):
        n = int(gen.integers(1, 8))
        beta = float(np.exp(gen.uniform(np.log(0.1), np.log(100.0))))
        reports.append(
            audit_softmin_lipschitz(gen.normal(0, 3, n), gen.normal(0, 3, n), beta)
        )
    failures["softmin_lipschitz"] = sum(1 for r in reports if r.skipped or not r.passed)

    reports = []
    for k in range(1000):
        eps, cfg = ((0.05, tight_005), (0.5, tight_05))[k % 2]
        lam = float(gen.choice([0.5, 1.0, 5.0]))
        reports.append(
            audit_grad_bound(
                _random_measure(gen, 3), _random_measure(gen, 3), lam, unit_box, cfg
            )
        )
    failures["gradient_norm"] = sum(1 for r in reports if r.skipped or not r.passed)

    count = 0
    for _ in range(1000):
        n = int(gen.integers(1, 7))
        beta = float(np.exp(gen.uniform(np.log(0.5), np.log(200.0))))
        for r in audit_interference(np.abs(gen.normal(0, 1, n)), beta):
            count += r.skipped or not r.passed
    failures["interference"] = count

    assert all(v == 0 for v in failures.values()), failures
    print("criterion 4: PASS (5 bound families x 1000 instances, zero failures)")


def test_criterion_5_gradients_match_finite_differences():
    gen = np.random.default_rng(1618)
    worst = 0.0
    for k in range(100):
        eps = (0.05, 0.5)[k % 2]
        m = int(gen.integers(2, 4))
        report = audit_fd_gradients(_random_measure(gen, m), _random_measure(gen, m), eps)
        assert not report.skipped, report.skip_reason
        assert report.passed, report
        assert report.details["weight_pairs"]
        worst = max(worst, report.measured)
    assert worst <= 1e-3
    print(f"criterion 5: PASS (worst relative error {worst:.2e} over 100 instances)")


def test_criterion_6_stored_patterns_are_near_fixed_points():
    ot_cfg = SinkhornConfig(epsilon=0.5, max_iter=2000, tol=1e-12)
    sharp = RetrievalConfig(beta=50.0, eta=0.01, lam=1.0)
    soft = RetrievalConfig(beta=1.0, eta=0.001, lam=1.0)
    worst_sharp = 0.0
    checked = 0
    for i in range(20):
        d = 8 if i < 10 else 32
        cfg = SampleConfig(
            dim=d, center=tuple([0.0] * d), radius=10, sigma=2, gamma=0.5,
            p=0.05, M=5, a_min=0.02, delta_min=0.05, epsilon=0.5, seed=1000 + i,
        )
        bank = sample_patterns(cfg, n=4)
        for idx in range(bank.n_patterns):
            # at beta=50 the gap bound underflows to zero while the divergence
            # measurement floors near 1e-6, so the audit tolerance is the
            # stated measurement resolution rather than the strict default
            sharp_report = audit_fixed_point(bank, idx, sharp, ot_cfg, tolerance=1e-4)
            soft_report = audit_fixed_point(bank, idx, soft, ot_cfg)
            assert sharp_report.passed, (i, idx, sharp_report)
            assert soft_report.passed, (i, idx, soft_report)
            assert sharp_report.measured <= 1e-4, (i, idx, sharp_report.measured)
            worst_sharp = max(worst_sharp, sharp_report.measured)
            checked += 1
    assert checked == 80
    print(
        f"criterion 6: PASS (80 patterns x 2 configurations, "
        f"worst sharp drift {worst_sharp:.2e})"
    )


def test_criterion_7_separation_failure_rate_within_budget():
    d, p, gamma = 64, 0.05, 0.5
    n = capacity(p, gamma, d).count
    assert n == 17  # floor(sqrt(2p) e^(gamma^2 d / 4))
    bad = 0
    for seed in range(400):
        cfg = SampleConfig(
            dim=d, center=tuple([0.0] * d), radius=10, sigma=2, gamma=gamma,
            p=p, M=5, a_min=0.02, delta_min=0.05, epsilon=0.5, seed=seed,
        )
        bank = sample_patterns(cfg, n=n)
        stats = separation_stats(bank, theory_constants(cfg), ot_cfg=None)
        bad += not stats.event_a
    fraction = bad / 400.0
    threshold = p + 3.0 * np.sqrt(p * (1.0 - p) / 400.0)
    assert fraction <= threshold, (fraction, threshold)
    print(
        f"criterion 7: PASS (violation fraction {fraction:.4f} <= {threshold:.4f} "
        f"over 400 banks of {n} patterns)"
    )


def test_criterion_8_energy_descends_and_error_decays():
    reports = suite_descent_decay(count=50)
    monotone = [r for r in reports if r.name == "energy_monotone"]
    fits = [r for r in reports if r.name == "decay_linear_fit"]
    assert len(monotone) == 50 and len(fits) == 50
    bad_monotone = [r for r in monotone if r.skipped or not r.passed]
    assert not bad_monotone, bad_monotone
    fit_passes = sum(1 for r in fits if r.passed and not r.skipped)
    assert fit_passes >= 45, fit_passes  # 90% of 50
    print(
        f"criterion 8: PASS (50/50 monotone traces, {fit_passes}/50 clean "
        f"log-linear decay fits)"
    )


def test_criterion_9_cli_outputs_are_bit_reproducible(tmp_path):
    sample_flags = [
        "--dim", "2", "--R", "10", "--sigma", "2", "--gamma", "0.5", "--p", "0.05",
        "--M", "4", "--a-min", "0.02", "--delta-min", "0.05", "--eps", "0.5",
        "--seed", "3", "--count", "3",
    ]
    bank_path = tmp_path / "bank.json"
    bank = save_compact_bank(bank_path)

    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps({
        "experiment": "custom",
        "n_patterns": 2,
        "M": 3,
        "means": [[-3.0, 0.0], [3.0, 0.0]],
        "covariances": [[[0.2, 0.0], [0.0, 0.2]], [[0.2, 0.0], [0.0, 0.2]]],
        "noise_sd": 0.1,
        "epsilon": 0.5,
        "eta": 0.05,
        "max_iter": 60,
        "sinkhorn_cap": 2000,
        "sinkhorn_tol": 1e-10,
    }))
    query_path = tmp_path / "query.json"
    pattern = bank.patterns[0]
    DiscreteMeasure(
        weights=pattern.weights, supports=pattern.supports + 0.05
    ).save(query_path)

    def invoke(run_tag):
        root = tmp_path / run_tag
        produced = []
        out = root / "bank.json"
        assert cli_main(["sample", *sample_flags, "--out", str(out)]) == 0
        produced += [out, root / "bank.report.json"]
        out = root / "audit.json"
        rc = cli_main([
            "audit", "--bank", str(bank_path), "--suite", "all",
            "--eps", "0.5", "--beta", "50", "--eta", "0.01", "--out", str(out),
        ])
        assert rc == 0
        produced.append(out)
        out = root / "experiment"
        assert cli_main([
            "experiment", "--config", str(config_path), "--seed", "1", "--out", str(out),
        ]) == 0
        produced += [out / "result.json", out / "plotdata.csv", out / "bank.json",
                     out / "trace_shk_p0.csv", out / "trace_euclidean_p1.csv"]
        out = root / "retrieval"
        assert cli_main([
            "retrieve", "--bank", str(bank_path), "--query", str(query_path),
            "--eps", "0.5", "--eta", "0.05", "--max-iter", "40", "--out", str(out),
        ]) == 0
        produced += [out / "final.json", out / "trace.csv", out / "result.json"]
        return root, produced

    root_a, files_a = invoke("a")
    root_b, files_b = invoke("b")
    for fa, fb in zip(files_a, files_b):
        assert fa.read_bytes() == fb.read_bytes(), fa.name
    print(
        f"criterion 9: PASS ({len(files_a)} files byte-identical across reruns "
        f"of all four subcommands)"
    )
