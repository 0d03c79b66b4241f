"""Associative recall over weighted point clouds.

The memory energy at a query is the soft minimum of the per-pattern debiased
divergences at inverse temperature beta. One retrieval iteration solves the
N cross transport problems and the query's self problem, forms Gibbs weights,
then moves every atom by the blended barycentric displacement (transport step)
and optionally reweights atoms multiplicatively (reaction step, scale lambda).
Both updates consume the same per-iteration solve, so they act on the same
state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measures import DiscreteMeasure, DomainSpec, PatternBank
from .serialize import write_csv
from .sinkhorn import (
    SinkhornConfig,
    _cross_state,
    _self_state,
    barycentric_map,
    self_ot_cost,
)


@dataclass(frozen=True)
class RetrievalConfig:
    beta: float
    eta: float
    lam: float = 1.0  # reaction scale of the metric's reweighting leg
    max_iter: int = 200
    stop_tol: float = 1e-7  # max atom displacement
    weight_stop_tol: float = 1e-9  # max weight change
    enable_weight_step: bool = True
    boundary_policy: str = "clip"  # "clip" (count and continue) or "error"

    def __post_init__(self):
        if not (self.beta > 0 and self.eta > 0 and self.lam > 0):
            raise ValueError("beta, eta, lam must all be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.boundary_policy not in ("clip", "error"):
            raise ValueError("boundary_policy must be 'clip' or 'error'")


@dataclass(frozen=True)
class EnergyState:
    divergences: np.ndarray  # per-pattern debiased divergence at the query
    weights: np.ndarray  # Gibbs weights (softmax of -beta * divergences)
    energy: float
    z: np.ndarray  # per-atom first-variation values
    zbar: float  # query-weighted average of z
    degraded: bool = False  # some solve hit its iteration cap


@dataclass(frozen=True)
class ShkGradient:
    """Riemannian gradient in the transport+reweighting metric."""

    weight_component: np.ndarray  # (a_m / lam^2)(z_m - zbar)
    position_component: np.ndarray  # per-atom velocity-field gradient
    norm: float


@dataclass(frozen=True)
class RetrievalStep:
    iteration: int
    measure: DiscreteMeasure
    energy_state: EnergyState
    grad_norm: float
    max_displacement: float
    clipped_atoms: int


@dataclass(frozen=True)
class RetrievalTrace:
    steps: tuple[RetrievalStep, ...]
    status: str  # "converged" | "iteration_cap" | "error"
    final: DiscreteMeasure

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy_state.energy for s in self.steps])

    @property
    def iterations(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class MatchResult:
    index: int
    margin: float  # runner-up divergence minus best; +inf when N == 1
    tied: bool
    divergences: np.ndarray


class RetrievalError(RuntimeError):
    """Aborted retrieval; carries the partial trace."""

    def __init__(self, message: str, trace: RetrievalTrace):
        super().__init__(message)
        self.trace = trace


@dataclass
class PotentialCache:
    """Warm-start store, owned by one retrieval loop (never shared)."""

    cross: list = field(default_factory=list)
    self_f: Optional[np.ndarray] = None


def softmin_energy(values: Sequence[float], beta: float) -> tuple[float, np.ndarray]:
    """Soft minimum and its softmax weights from one stabilized pass.

    Sharing the shifted exponentials guarantees the sandwich
    min - log(N)/beta <= energy <= min bit-consistently.
    """
    vals = np.asarray(values, dtype=np.float64)
    vmin = float(np.min(vals))
    shifted = np.exp(-beta * (vals - vmin))
    total = float(shifted.sum())
    return vmin - math.log(total) / beta, shifted / total


def pattern_self_costs(bank: PatternBank, ot_cfg: SinkhornConfig) -> np.ndarray:
    """Self transport cost of every stored pattern (constant per bank and eps)."""
    return np.array([self_ot_cost(p, ot_cfg) for p in bank.patterns])


@dataclass
class _StepSolution:
    state: EnergyState
    cross_potentials: np.ndarray  # (N, M) source potentials at query atoms
    cross_couplings: list
    self_coupling: np.ndarray
    velocity: np.ndarray  # (M, d) blended barycentric velocity


def _solve_step(
    query: DiscreteMeasure,
    bank: PatternBank,
    cfg: RetrievalConfig,
    ot_cfg: SinkhornConfig,
    cache: Optional[PotentialCache],
    self_costs: np.ndarray,
) -> _StepSolution:
    n = bank.n_patterns
    if cache is not None and not cache.cross:
        cache.cross = [None] * n
    cross_pot = np.empty((n, query.num_atoms))
    couplings = []
    ots = np.empty(n)
    degraded = False
    for i, pattern in enumerate(bank.patterns):
        warm = cache.cross[i] if cache is not None else None
        try:
            sol, P, value = _cross_state(query, pattern, ot_cfg, warm_start=warm)
        except Exception as exc:
            raise RuntimeError(f"transport solve against pattern {i} failed: {exc}") from exc
        cross_pot[i] = sol.f
        couplings.append(P)
        ots[i] = value
        degraded = degraded or not sol.converged
        if cache is not None:
            cache.cross[i] = (sol.f, sol.g)
    sp, self_P, self_value = _self_state(
        query, ot_cfg, warm_start=cache.self_f if cache is not None else None
    )
    degraded = degraded or not sp.converged
    if cache is not None:
        cache.self_f = sp.f_sym

    divergences = ots - 0.5 * self_value - 0.5 * self_costs
    energy, w = softmin_energy(divergences, cfg.beta)
    z = w @ cross_pot - sp.f_sym
    zbar = float(query.weights @ z)
    state = EnergyState(
        divergences=divergences, weights=w, energy=energy, z=z, zbar=zbar, degraded=degraded
    )

    maps = np.stack(
        [barycentric_map(P, query.weights, p.supports) for P, p in zip(couplings, bank.patterns)]
    )
    self_map = barycentric_map(self_P, query.weights, query.supports)
    velocity = np.tensordot(w, maps, axes=1) - self_map
    return _StepSolution(
        state=state,
        cross_potentials=cross_pot,
        cross_couplings=couplings,
        self_coupling=self_P,
        velocity=velocity,
    )


def _check_query(query: DiscreteMeasure, bank: PatternBank) -> None:
    if query.num_atoms != bank.params.M:
        raise ValueError(
            f"query has {query.num_atoms} atoms but the bank stores {bank.params.M}; "
            "mixed atom counts are not supported"
        )
    if query.dim != bank.dim:
        raise ValueError(f"query dim {query.dim} does not match bank dim {bank.dim}")


def energy_state(
    query: DiscreteMeasure,
    bank: PatternBank,
    cfg: RetrievalConfig,
    ot_cfg: SinkhornConfig,
    cache: Optional[PotentialCache] = None,
    self_costs: Optional[np.ndarray] = None,
) -> EnergyState:
    """Divergences, Gibbs weights, energy, and first-variation values at a query."""
    _check_query(query, bank)
    if self_costs is None:
        self_costs = pattern_self_costs(bank, ot_cfg)
    return _solve_step(query, bank, cfg, ot_cfg, cache, self_costs).state


def _apply_transport(
    supports: np.ndarray,
    velocity: np.ndarray,
    eta: float,
    dom: Optional[DomainSpec],
    boundary_policy: str,
) -> tuple[np.ndarray, int]:
    moved = supports + eta * velocity
    if dom is None:
        return moved, 0
    inside = dom.contains(moved)
    if np.all(inside):
        return moved, 0
    if boundary_policy == "error":
        out = np.where(~inside)[0].tolist()
        raise RuntimeError(f"atoms {out} left the domain and boundary_policy is 'error'")
    clipped, count = dom.clip(moved)
    return clipped, count


def transport_step(
    query: DiscreteMeasure,
    pattern_maps: np.ndarray,
    self_map: np.ndarray,
    gibbs_weights: np.ndarray,
    eta: float,
    dom: Optional[DomainSpec] = None,
    boundary_policy: str = "clip",
) -> tuple[np.ndarray, int]:
    """x_m <- x_m + eta * (sum_i w_i T_i(x_m) - T_0(x_m)).

    Atoms pushed out of the domain are projected back (counted) or raise,
    per boundary_policy. Returns (new supports, clipped atom count).
    """
    maps = np.asarray(pattern_maps, dtype=np.float64)
    velocity = np.tensordot(np.asarray(gibbs_weights, dtype=np.float64), maps, axes=1)
    velocity -= np.asarray(self_map, dtype=np.float64)
    return _apply_transport(query.supports, velocity, eta, dom, boundary_policy)


def weight_step(a: np.ndarray, z: np.ndarray, eta: float, lam: float) -> np.ndarray:
    """Multiplicative reweighting a_m <- a_m exp(-(eta/lam^2) z_m), renormalized.

    The exponent is shifted by its maximum before exponentiation; the shift
    (like any additive constant in z) cancels in the normalization.
    """
    a = np.asarray(a, dtype=np.float64)
    exponent = -(eta / lam**2) * np.asarray(z, dtype=np.float64)
    exponent = exponent - np.max(exponent)
    scaled = a * np.exp(exponent)
    return scaled / scaled.sum()


def shk_grad(
    a: np.ndarray, z: np.ndarray, zbar: float, position_grads: np.ndarray, lam: float
) -> ShkGradient:
    """Metric gradient from first-variation values and per-atom position grads.

    norm^2 = sum_m a_m [ (z_m - zbar)^2 / lam^2 + |position_grad_m|^2 ].
    """
    a = np.asarray(a, dtype=np.float64)
    centered = np.asarray(z, dtype=np.float64) - zbar
    zeta = np.asarray(position_grads, dtype=np.float64)
    norm_sq = float(np.sum(a * (centered**2 / lam**2 + np.sum(zeta**2, axis=1))))
    return ShkGradient(
        weight_component=(a / lam**2) * centered,
        position_component=zeta,
        norm=math.sqrt(max(norm_sq, 0.0)),
    )


def retrieve(
    query: DiscreteMeasure,
    bank: PatternBank,
    cfg: RetrievalConfig,
    ot_cfg: SinkhornConfig,
) -> RetrievalTrace:
    """Run the full retrieval loop from a query; returns the complete trace.

    Stops when the largest atom displacement falls below stop_tol and the
    largest weight change below weight_stop_tol, or at max_iter.
    """
    _check_query(query, bank)
    self_costs = pattern_self_costs(bank, ot_cfg)
    cache = PotentialCache()
    steps: list[RetrievalStep] = []
    current = query
    status = "iteration_cap"
    for k in range(cfg.max_iter):
        try:
            data = _solve_step(current, bank, cfg, ot_cfg, cache, self_costs)
            # position component of the gradient is minus the velocity, so the
            # applied displacement is exactly -eta * position_component
            grad = shk_grad(
                current.weights, data.state.z, data.state.zbar, -data.velocity, cfg.lam
            )
            new_supports, clipped = _apply_transport(
                current.supports, data.velocity, cfg.eta, bank.domain, cfg.boundary_policy
            )
            if cfg.enable_weight_step:
                new_weights = weight_step(current.weights, data.state.z, cfg.eta, cfg.lam)
                weight_change = float(np.max(np.abs(new_weights - current.weights)))
            else:
                new_weights = current.weights
                weight_change = 0.0
        except RuntimeError as exc:
            partial = RetrievalTrace(steps=tuple(steps), status="error", final=current)
            raise RetrievalError(str(exc), partial) from exc
        max_disp = float(np.max(np.linalg.norm(new_supports - current.supports, axis=1)))
        steps.append(
            RetrievalStep(
                iteration=k,
                measure=current,
                energy_state=data.state,
                grad_norm=grad.norm,
                max_displacement=max_disp,
                clipped_atoms=clipped,
            )
        )
        current = DiscreteMeasure(weights=new_weights, supports=new_supports)
        if max_disp < cfg.stop_tol and weight_change < cfg.weight_stop_tol:
            status = "converged"
            break
    return RetrievalTrace(steps=tuple(steps), status=status, final=current)


def success_metric(
    retrieved: DiscreteMeasure,
    bank: PatternBank,
    ot_cfg: SinkhornConfig,
    self_costs: Optional[np.ndarray] = None,
) -> MatchResult:
    """Nearest stored pattern by divergence, with the margin to the runner-up."""
    _check_query(retrieved, bank)
    if self_costs is None:
        self_costs = pattern_self_costs(bank, ot_cfg)
    _, _, query_self = _self_state(retrieved, ot_cfg)
    div = np.empty(bank.n_patterns)
    for i, pattern in enumerate(bank.patterns):
        _, _, cross = _cross_state(retrieved, pattern, ot_cfg)
        div[i] = cross - 0.5 * query_self - 0.5 * self_costs[i]
    best = int(np.argmin(div))
    if bank.n_patterns == 1:
        return MatchResult(index=0, margin=math.inf, tied=False, divergences=div)
    others = np.delete(div, best)
    runner_up = float(np.min(others))
    return MatchResult(
        index=best,
        margin=runner_up - float(div[best]),
        tied=runner_up == float(div[best]),
        divergences=div,
    )


def trace_header(n_patterns: int) -> list[str]:
    return (
        ["iter", "energy"]
        + [f"S_eps_{i}" for i in range(n_patterns)]
        + [f"w_{i}" for i in range(n_patterns)]
        + ["grad_norm", "max_disp", "clipped"]
    )


def write_trace_csv(trace: RetrievalTrace, path) -> None:
    if not trace.steps:
        raise ValueError("empty trace")
    n = len(trace.steps[0].energy_state.divergences)
    rows = []
    for step in trace.steps:
        st = step.energy_state
        rows.append(
            [step.iteration, st.energy]
            + list(st.divergences)
            + list(st.weights)
            + [step.grad_norm, step.max_displacement, step.clipped_atoms]
        )
    write_csv(path, trace_header(n), rows)
