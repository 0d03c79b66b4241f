"""The two synthetic recall benchmarks and their file outputs.

Benchmark 1: five Gaussian clouds with distinct means; both retrieval methods
should recover every pattern from a noisy query. Benchmark 2: five zero-mean
Gaussian clouds distinguished only by covariance shape; transport retrieval
should still recover all five while the flat-vector baseline degrades.

Everything is deterministic in (config, seed): patterns, covariances, and
query noise each draw from their own tagged counter-based stream, so no file
output depends on execution order or wall clock.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .baseline import retrieve_euclidean, write_euclidean_trace_csv
from .measures import DiscreteMeasure, DomainSpec, MeasureParams, PatternBank
from .retrieval import (
    RetrievalConfig,
    RetrievalError,
    pattern_self_costs,
    retrieve,
    success_metric,
    write_trace_csv,
)
from .serialize import dump_json, write_csv
from .sinkhorn import SinkhornConfig

EXP1_MEANS = ((-4.0, -1.0), (-2.0, 2.2), (1.0, -6.0), (4.0, -4.2), (4.2, -0.8))
EXP1_COVARIANCES = (
    ((0.60, 0.20), (0.20, 0.90)),
    ((0.80, -0.15), (-0.15, 0.55)),
    ((0.65, 0.0), (0.0, 0.65)),
    ((0.55, 0.10), (0.10, 1.00)),
    ((0.95, 0.0), (0.0, 0.50)),
)

# stream tags: patterns, covariances, and query noise must never share a stream
_PATTERN_TAG = 1
_COVARIANCE_TAG = 2
_NOISE_TAG = 3


def _nested_tuple(x):
    if x is None:
        return None
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return tuple(float(v) for v in arr)
    return tuple(_nested_tuple(row) for row in arr)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str  # "exp1" | "exp2" | "custom"
    n_patterns: int = 5
    dim: int = 2
    M: int = 30
    beta: float = 50.0
    epsilon: float = 0.05
    eta: float = 1.3
    lam: float = 1.0
    noise_sd: float = 0.5
    max_iter: int = 200
    sinkhorn_cap: int = 120
    sinkhorn_tol: float = 1e-9
    seed: int = 0
    enable_weight_step: bool = False
    stop_tol: float = 1e-7
    weight_stop_tol: float = 1e-9
    baseline_stop_tol: float = 1e-9
    domain_padding: float = 0.2
    means: Optional[tuple] = None
    covariances: Optional[tuple] = None
    eigenvalue_range: Optional[tuple] = None

    def __post_init__(self):
        if self.experiment not in ("exp1", "exp2", "custom"):
            raise ValueError("experiment must be exp1, exp2, or custom")
        object.__setattr__(self, "means", _nested_tuple(self.means))
        object.__setattr__(self, "covariances", _nested_tuple(self.covariances))
        object.__setattr__(self, "eigenvalue_range", _nested_tuple(self.eigenvalue_range))
        if self.means is None:
            raise ValueError("means are required (use from_id for the built-in setups)")
        if len(self.means) != self.n_patterns:
            raise ValueError(f"need {self.n_patterns} means, got {len(self.means)}")
        if any(len(m) != self.dim for m in self.means):
            raise ValueError("every mean must have length dim")
        if self.covariances is None and self.eigenvalue_range is None:
            raise ValueError("need explicit covariances or an eigenvalue_range")
        if self.covariances is not None and len(self.covariances) != self.n_patterns:
            raise ValueError(f"need {self.n_patterns} covariances")
        if self.eigenvalue_range is not None:
            lo, hi = self.eigenvalue_range
            if not (0 < lo <= hi):
                raise ValueError("eigenvalue_range must satisfy 0 < low <= high")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.M < 2 or self.n_patterns < 1:
            raise ValueError("need M >= 2 and at least one pattern")

    @classmethod
    def from_id(cls, which: str, seed: int = 0, **overrides) -> "ExperimentConfig":
        if which == "exp1":
            base = dict(
                experiment="exp1",
                means=EXP1_MEANS,
                covariances=EXP1_COVARIANCES,
                M=30,
                noise_sd=0.5,
            )
        elif which == "exp2":
            base = dict(
                experiment="exp2",
                means=((0.0, 0.0),) * 5,
                eigenvalue_range=(0.15, 1.75),
                M=25,
                noise_sd=0.2,
            )
        elif which == "custom":
            base = dict(experiment="custom")
        else:
            raise ValueError(f"unknown experiment id {which!r}")
        base.update(overrides)
        return cls(seed=seed, **base)

    def retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(
            beta=self.beta,
            eta=self.eta,
            lam=self.lam,
            max_iter=self.max_iter,
            stop_tol=self.stop_tol,
            weight_stop_tol=self.weight_stop_tol,
            enable_weight_step=self.enable_weight_step,
            boundary_policy="clip",
        )

    def sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(
            epsilon=self.epsilon, max_iter=self.sinkhorn_cap, tol=self.sinkhorn_tol
        )


def config_from_json(data: dict) -> ExperimentConfig:
    """Build a config from a JSON override dict ({"experiment": id, ...overrides})."""
    payload = dict(data)
    which = payload.pop("experiment", "custom")
    seed = payload.pop("seed", 0)
    return ExperimentConfig.from_id(which, seed=seed, **payload)


def _haar_rotation(gen: np.random.Generator, d: int) -> np.ndarray:
    """Rotation drawn uniformly; QR of a Gaussian matrix with sign correction."""
    a = gen.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _sample_covariances(cfg: ExperimentConfig) -> np.ndarray:
    lo, hi = cfg.eigenvalue_range
    covs = np.empty((cfg.n_patterns, cfg.dim, cfg.dim))
    for i, seq in enumerate(np.random.SeedSequence([cfg.seed, _COVARIANCE_TAG]).spawn(cfg.n_patterns)):
        gen = np.random.Generator(np.random.Philox(seq))
        rotation = _haar_rotation(gen, cfg.dim)
        eigenvalues = gen.uniform(lo, hi, size=cfg.dim)
        covs[i] = rotation @ np.diag(eigenvalues) @ rotation.T
    return covs


def _padded_box(all_points: np.ndarray, padding: float) -> DomainSpec:
    lo = all_points.min(axis=0)
    hi = all_points.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, padding * span, 1.0)
    return DomainSpec.box(lo - pad, hi + pad)


def build_bank(cfg: ExperimentConfig) -> PatternBank:
    """Gaussian pattern clouds with uniform weights and a padded box domain."""
    means = np.asarray(cfg.means, dtype=np.float64)
    if cfg.covariances is not None:
        covs = np.asarray(cfg.covariances, dtype=np.float64)
    else:
        covs = _sample_covariances(cfg)
    weights = np.full(cfg.M, 1.0 / cfg.M)
    patterns = []
    for i, seq in enumerate(np.random.SeedSequence([cfg.seed, _PATTERN_TAG]).spawn(cfg.n_patterns)):
        gen = np.random.Generator(np.random.Philox(seq))
        chol = np.linalg.cholesky(covs[i])
        supports = means[i] + gen.standard_normal((cfg.M, cfg.dim)) @ chol.T
        patterns.append(DiscreteMeasure(weights=weights, supports=supports))
    min_sep = min(
        float(np.min(np.linalg.norm(p.supports[:, None, :] - p.supports[None, :, :], axis=2)
                     [np.triu_indices(cfg.M, k=1)]))
        for p in patterns
    )
    if not min_sep > 0:
        raise RuntimeError("degenerate sample: two atoms coincide; change the seed")
    params = MeasureParams(M=cfg.M, a_min=1.0 / (2.0 * cfg.M), delta_min=0.5 * min_sep)
    domain = _padded_box(np.concatenate([p.supports for p in patterns]), cfg.domain_padding)
    return PatternBank(patterns=tuple(patterns), params=params, domain=domain)


def build_experiment1(seed: int) -> PatternBank:
    return build_bank(ExperimentConfig.from_id("exp1", seed=seed))


def build_experiment2(seed: int) -> PatternBank:
    return build_bank(ExperimentConfig.from_id("exp2", seed=seed))


def make_queries(cfg: ExperimentConfig, bank: PatternBank) -> list[DiscreteMeasure]:
    """One query per pattern: supports jittered by i.i.d. Gaussian noise,
    weights untouched, atoms handed over in shuffled order.

    A weighted point cloud carries no atom numbering, so the shuffle changes
    nothing the transport method can see; it only keeps consumers honest
    about index correspondence, which the vectorized baseline does not get.
    Queries are not clipped to the domain; the first transport update
    projects (and counts) any strays."""
    queries = []
    for pattern, seq in zip(
        bank.patterns, np.random.SeedSequence([cfg.seed, _NOISE_TAG]).spawn(bank.n_patterns)
    ):
        gen = np.random.Generator(np.random.Philox(seq))
        noise = cfg.noise_sd * gen.standard_normal(pattern.supports.shape)
        order = gen.permutation(pattern.num_atoms)
        queries.append(
            DiscreteMeasure(
                weights=pattern.weights[order],
                supports=(pattern.supports + noise)[order],
            )
        )
    return queries


@dataclass(frozen=True)
class RetrievalOutcome:
    target: int
    retrieved: Optional[int]
    success: bool
    iterations: int
    status: str
    divergences: tuple
    margin: float
    clipped_atoms: int = 0
    error: str = ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["margin"] = None if math.isinf(self.margin) else self.margin
        return out


@dataclass(frozen=True)
class RunResult:
    shk: tuple[RetrievalOutcome, ...]
    euclidean: tuple[RetrievalOutcome, ...]

    @property
    def shk_successes(self) -> int:
        return sum(1 for o in self.shk if o.success)

    @property
    def euclidean_successes(self) -> int:
        return sum(1 for o in self.euclidean if o.success)

    def to_dict(self) -> dict:
        return {
            "patterns": [
                {"target": i, "shk": s.to_dict(), "euclidean": e.to_dict()}
                for i, (s, e) in enumerate(zip(self.shk, self.euclidean))
            ],
            "aggregate": {
                "n_patterns": len(self.shk),
                "shk_successes": self.shk_successes,
                "euclidean_successes": self.euclidean_successes,
            },
        }


def _plotdata_rows(index: int, role: str, measure: DiscreteMeasure) -> list:
    return [
        [index, role, m] + list(measure.supports[m]) + [measure.weights[m]]
        for m in range(measure.num_atoms)
    ]


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run both retrieval methods on every pattern's noisy query.

    Writes result.json, per-run trace CSVs, and plotdata.csv when out_dir is
    given. Solver failures are recorded per run; the sweep continues.
    """
    bank = build_bank(cfg)
    queries = make_queries(cfg, bank)
    retr_cfg = cfg.retrieval_config()
    ot_cfg = cfg.sinkhorn_config()
    self_costs = pattern_self_costs(bank, ot_cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    shk_outcomes = []
    euclid_outcomes = []
    plot_rows = []
    for i, query in enumerate(queries):
        try:
            trace = retrieve(query, bank, retr_cfg, ot_cfg)
            match = success_metric(trace.final, bank, ot_cfg, self_costs=self_costs)
            shk_final = trace.final
            shk_outcomes.append(
                RetrievalOutcome(
                    target=i,
                    retrieved=match.index,
                    success=match.index == i,
                    iterations=trace.iterations,
                    status=trace.status,
                    divergences=tuple(float(v) for v in match.divergences),
                    margin=match.margin,
                    clipped_atoms=sum(s.clipped_atoms for s in trace.steps),
                )
            )
            if out is not None:
                write_trace_csv(trace, out / f"trace_shk_p{i}.csv")
        except RetrievalError as exc:
            shk_final = exc.trace.final
            shk_outcomes.append(
                RetrievalOutcome(
                    target=i,
                    retrieved=None,
                    success=False,
                    iterations=exc.trace.iterations,
                    status="error",
                    divergences=(),
                    margin=math.nan,
                    error=str(exc),
                )
            )
            if out is not None and exc.trace.steps:
                write_trace_csv(exc.trace, out / f"trace_shk_p{i}.csv")

        etrace = retrieve_euclidean(
            query, bank, beta=cfg.beta, max_iter=cfg.max_iter, stop_tol=cfg.baseline_stop_tol
        )
        ematch = success_metric(etrace.final, bank, ot_cfg, self_costs=self_costs)
        euclid_outcomes.append(
            RetrievalOutcome(
                target=i,
                retrieved=ematch.index,
                success=ematch.index == i,
                iterations=etrace.iterations,
                status=etrace.status,
                divergences=tuple(float(v) for v in ematch.divergences),
                margin=ematch.margin,
            )
        )
        if out is not None:
            write_euclidean_trace_csv(etrace, out / f"trace_euclidean_p{i}.csv")
            plot_rows.extend(_plotdata_rows(i, "query", query))
            plot_rows.extend(_plotdata_rows(i, "retrieved", shk_final))
            plot_rows.extend(_plotdata_rows(i, "target", bank.patterns[i]))

    result = RunResult(shk=tuple(shk_outcomes), euclidean=tuple(euclid_outcomes))
    if out is not None:
        header = ["pattern", "role", "atom"] + [f"x{k + 1}" for k in range(bank.dim)] + ["weight"]
        write_csv(out / "plotdata.csv", header, plot_rows)
        bank.save(out / "bank.json")
        payload = {
            "config": asdict(cfg),
            "metadata": {
                "rng": "counter-based per-pattern streams; entropy tags "
                "[seed,1]=patterns [seed,2]=covariances [seed,3]=query noise",
                "domain": bank.domain.to_dict(),
                "boundary_policy": "clip",
                "atom_alignment": "query atoms shuffled per query; no index "
                "correspondence with pattern atoms",
                "classification": "nearest divergence at the run epsilon",
            },
            "result": result.to_dict(),
        }
        dump_json(payload, out / "result.json")
    return result


def run_repeats(cfg: ExperimentConfig, repeats: int, out_dir) -> dict:
    """Repeat the experiment over consecutive seeds; per-seed subdirectories
    plus an aggregate summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for j in range(repeats):
        seed = cfg.seed + j
        run_cfg = ExperimentConfig(**{**asdict(cfg), "seed": seed})
        result = run_experiment(run_cfg, out / f"seed_{seed}")
        per_seed.append(
            {
                "seed": seed,
                "shk_successes": result.shk_successes,
                "euclidean_successes": result.euclidean_successes,
                "n_patterns": len(result.shk),
            }
        )
    n = cfg.n_patterns
    summary = {
        "experiment": cfg.experiment,
        "repeats": repeats,
        "per_seed": per_seed,
        "aggregate": {
            "shk_all_correct": sum(1 for r in per_seed if r["shk_successes"] == n),
            "euclidean_all_correct": sum(1 for r in per_seed if r["euclidean_successes"] == n),
            "euclidean_any_failure": sum(1 for r in per_seed if r["euclidean_successes"] < n),
        },
    }
    dump_json(summary, out / "summary.json")
    return summary
