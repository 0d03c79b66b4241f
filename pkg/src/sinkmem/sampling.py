"""Random pattern-bank generator with provable-capacity constants.

Pattern means sit at scaled Rademacher corners of distance R0 = R - 2*sigma
from the ball center; each pattern's atom cloud is an independently drawn
shape (uniform in a sigma-ball, pairwise gaps above delta_min by rejection)
recentred so the weighted mean lands exactly on the pattern mean. All atoms
then stay strictly inside the radius-R ball.

Per-pattern randomness uses spawned counter-based streams, so patterns are
independent and the bank is reproducible regardless of sampling order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .measures import (
    DiscreteMeasure,
    DomainSpec,
    MeasureParams,
    PatternBank,
    validate_measure,
)

CAPACITY_CAP = 10**9
REJECTION_CAP = 100_000


class ConfigurationError(ValueError):
    """A parameter combination violates a stated feasibility inequality."""


@dataclass(frozen=True)
class CapacityResult:
    count: int
    saturated: bool = False

    @property
    def empty(self) -> bool:
        return self.count == 0


def capacity(p: float, gamma: float, d: int) -> CapacityResult:
    """floor(sqrt(2p) * exp(gamma^2 d / 4)), evaluated in log space.

    Saturates at 10^9. The floor is guarded against off-by-one at values
    whose log sits exactly on the float grid.
    """
    if not (0 < p < 1 and 0 < gamma < 1 and d >= 1):
        raise ValueError("need p in (0,1), gamma in (0,1), d >= 1")
    log_n = 0.5 * math.log(2.0 * p) + gamma * gamma * d / 4.0
    if log_n > math.log(CAPACITY_CAP):
        return CapacityResult(count=CAPACITY_CAP, saturated=True)
    n = int(math.floor(math.exp(log_n)))
    while math.log(n + 1) <= log_n:
        n += 1
    while n >= 1 and math.log(n) > log_n:
        n -= 1
    return CapacityResult(count=n, saturated=False)


@dataclass(frozen=True)
class TheoryConstants:
    n_capacity: int
    d_min: float
    r: float  # guaranteed basin size; positive by config validation
    delta: float  # energy-gap scale d_min^2 / 4
    capacity_saturated: bool = False


def _uniform_in_ball(gen: np.random.Generator, m: int, dim: int, radius: float):
    """m points uniform in the open ball of given radius, or None on a
    degenerate draw (zero-norm direction)."""
    direction = gen.standard_normal((m, dim))
    norms = np.linalg.norm(direction, axis=1)
    if np.any(norms == 0.0):
        return None
    radii = radius * gen.random(m) ** (1.0 / dim)
    return direction / norms[:, None] * radii[:, None]


def _sample_shape(
    gen: np.random.Generator, m: int, dim: int, sigma: float, delta_min: float
) -> np.ndarray:
    """Rejection-sample m points in B(0, sigma) with pairwise gaps > delta_min."""
    for _ in range(REJECTION_CAP):
        z = _uniform_in_ball(gen, m, dim, sigma)
        if z is None:
            continue
        diff = z[:, None, :] - z[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        iu = np.triu_indices(m, k=1)
        if np.all(dist[iu] > delta_min):
            return z
    raise ConfigurationError(
        f"could not place {m} points with pairwise gaps > {delta_min} inside a ball "
        f"of radius {sigma} within {REJECTION_CAP} attempts; the shape constraint "
        "set is empty or nearly so (shrink delta_min, grow sigma, or reduce M)"
    )


@dataclass(frozen=True)
class SampleConfig:
    dim: int
    center: tuple
    radius: float  # R
    sigma: float  # shape radius, in (0, R/4)
    gamma: float  # separation margin in (0, 1)
    p: float  # failure budget in (0, 1)
    M: int
    a_min: float
    delta_min: float
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        center = np.asarray(self.center, dtype=np.float64)
        if center.shape != (self.dim,) or not np.all(np.isfinite(center)):
            raise ValueError("center must be a finite vector of length dim")
        object.__setattr__(self, "center", tuple(float(c) for c in center))
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if not (self.radius > 0):
            raise ValueError("radius must be positive")
        if not (0 < self.sigma < self.radius / 4):
            raise ConfigurationError(
                f"sigma must lie in (0, R/4) = (0, {self.radius / 4}); got {self.sigma}"
            )
        if not (0 < self.gamma < 1 and 0 < self.p < 1):
            raise ValueError("gamma and p must lie in (0, 1)")
        if not (0 < self.a_min < 1 / self.M):
            raise ValueError(f"a_min must lie in (0, 1/M) = (0, {1 / self.M})")
        if not (self.delta_min > 0 and self.epsilon > 0):
            raise ValueError("delta_min and epsilon must be positive")
        # feasibility of the basin radius: epsilon log M < (1 - gamma)/16 * R0^2,
        # checked as r > 0 so this is the single authoritative boundary
        d_min = math.sqrt(2.0 * (1.0 - self.gamma)) * self.r0
        r = d_min * d_min / 32.0 - self.epsilon * math.log(self.M)
        if not r > 0:
            raise ConfigurationError(
                f"epsilon log M = {self.epsilon * math.log(self.M)} must be strictly "
                f"below (1 - gamma)/16 * R0^2 = {(1.0 - self.gamma) / 16.0 * self.r0**2} "
                "(equivalently the basin radius r must be positive); reduce epsilon, "
                "M, or gamma, or enlarge R"
            )
        # shape set must be non-empty; probe with a fixed stream so config
        # validity never depends on the sampling seed
        probe = np.random.Generator(np.random.Philox(np.random.SeedSequence(0)))
        _sample_shape(probe, self.M, self.dim, self.sigma, self.delta_min)

    @property
    def r0(self) -> float:
        return self.radius - 2.0 * self.sigma

    def domain(self) -> DomainSpec:
        return DomainSpec.ball(np.asarray(self.center), self.radius)

    def measure_params(self) -> MeasureParams:
        return MeasureParams(M=self.M, a_min=self.a_min, delta_min=self.delta_min)


def theory_constants(cfg: SampleConfig) -> TheoryConstants:
    cap = capacity(cfg.p, cfg.gamma, cfg.dim)
    d_min = math.sqrt(2.0 * (1.0 - cfg.gamma)) * cfg.r0
    r = d_min * d_min / 32.0 - cfg.epsilon * math.log(cfg.M)
    if not r > 0:
        raise ConfigurationError(
            f"r = d_min^2/32 - epsilon log M = {r} <= 0; epsilon log M must stay "
            "below d_min^2 / 32"
        )
    return TheoryConstants(
        n_capacity=cap.count,
        d_min=d_min,
        r=r,
        delta=d_min * d_min / 4.0,
        capacity_saturated=cap.saturated,
    )


def _sample_one(cfg: SampleConfig, seq: np.random.SeedSequence) -> DiscreteMeasure:
    # draw order (signs, weights, shape) is fixed: changing it changes banks
    gen = np.random.Generator(np.random.Philox(seq))
    signs = gen.integers(0, 2, size=cfg.dim) * 2.0 - 1.0
    center = np.asarray(cfg.center, dtype=np.float64)
    mean = center + (cfg.r0 / math.sqrt(cfg.dim)) * signs
    flat = gen.dirichlet(np.ones(cfg.M))
    weights = cfg.a_min + (1.0 - cfg.M * cfg.a_min) * flat
    z = _sample_shape(gen, cfg.M, cfg.dim, cfg.sigma, cfg.delta_min)
    zbar = weights @ z
    supports = mean + (z - zbar)
    measure = DiscreteMeasure(weights=weights, supports=supports)
    if float(np.max(np.abs(measure.weights @ measure.supports - mean))) > 1e-10:
        raise RuntimeError("sampled pattern mean deviates from its target")
    return measure


def sample_patterns(
    cfg: SampleConfig,
    n: Optional[int] = None,
    rng: Optional[np.random.SeedSequence] = None,
) -> PatternBank:
    """Draw a bank of n patterns (default: the capacity count for cfg).

    Identical (cfg, n) gives a bit-identical bank. Every emitted pattern
    satisfies the bank's measure constraints; violations abort.
    """
    if n is None:
        cap = capacity(cfg.p, cfg.gamma, cfg.dim)
        if cap.count < 1:
            raise ConfigurationError(
                "capacity is zero at this failure budget; pass an explicit count"
            )
        if cap.count > 100_000:
            raise ConfigurationError(
                f"capacity {cap.count} is too large to materialize; pass an explicit count"
            )
        n = cap.count
    if n < 1:
        raise ValueError("n must be at least 1")
    root = rng if rng is not None else np.random.SeedSequence(cfg.seed)
    params = cfg.measure_params()
    dom = cfg.domain()
    patterns = []
    for i, child in enumerate(root.spawn(n)):
        measure = _sample_one(cfg, child)
        result = validate_measure(measure, params, dom)
        if not result.ok:
            raise RuntimeError(f"sampled pattern {i} failed validation: {result.violations}")
        patterns.append(measure)
    return PatternBank(patterns=tuple(patterns), params=params, domain=dom)


@dataclass(frozen=True)
class SeparationStats:
    n_pairs: int
    min_mean_distance: float  # inf when fewer than 2 patterns
    pairs_below_dmin: int
    closest_pair: Optional[tuple[int, int]]
    event_a: bool  # every pair of pattern means at least d_min apart
    min_divergence: Optional[float] = None
    min_divergence_pair: Optional[tuple[int, int]] = None


def separation_stats(bank: PatternBank, consts: TheoryConstants, ot_cfg=None) -> SeparationStats:
    """Pairwise mean-distance scan; optionally the minimum pairwise divergence.

    The divergence scan runs only when a solver config is passed (it costs
    N(N-1)/2 solves).
    """
    n = bank.n_patterns
    if n < 2:
        return SeparationStats(
            n_pairs=0,
            min_mean_distance=math.inf,
            pairs_below_dmin=0,
            closest_pair=None,
            event_a=True,
        )
    means = np.stack([p.weights @ p.supports for p in bank.patterns])
    diff = means[:, None, :] - means[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    iu = np.triu_indices(n, k=1)
    flat = dist[iu]
    k = int(np.argmin(flat))
    closest = (int(iu[0][k]), int(iu[1][k]))
    below = int(np.sum(flat < consts.d_min))
    min_div = None
    min_div_pair = None
    if ot_cfg is not None:
        from .sinkhorn import sinkhorn_divergence

        best = math.inf
        for i in range(n):
            for j in range(i + 1, n):
                val = sinkhorn_divergence(bank.patterns[i], bank.patterns[j], ot_cfg)
                if val < best:
                    best = val
                    min_div_pair = (i, j)
        min_div = best
    return SeparationStats(
        n_pairs=len(flat),
        min_mean_distance=float(flat[k]),
        pairs_below_dmin=below,
        closest_pair=closest,
        event_a=below == 0,
        min_divergence=min_div,
        min_divergence_pair=min_div_pair,
    )
