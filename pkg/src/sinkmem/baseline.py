"""Euclidean softmax-attention retrieval over vectorized measures.

Each measure becomes one flat vector: atom coordinates in atom-major order,
then the log weights. Retrieval iterates the attention fixed point
xi <- sum_i softmax(-beta/2 ||xi - x_i||^2)_i x_i in that vector space.
The squared-distance affinity equals the inner-product form
softmax(beta <x_i, xi>) whenever the stored vectors share one norm; when
norms differ it drops the norm bias that lets a long stored vector outscore
the pattern the query actually sits on. Used as the comparison method;
classification of the result still happens in divergence space, by the
caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, PatternBank
from .retrieval import softmin_energy
from .serialize import write_csv


@dataclass(frozen=True)
class VectorizedMeasure:
    v: np.ndarray
    dim: int
    num_atoms: int

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != (self.dim + 1) * self.num_atoms:
            raise ValueError(
                f"vector length {v.shape} does not match (dim+1)*M = "
                f"{(self.dim + 1) * self.num_atoms}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite entries in vectorized measure")
        object.__setattr__(self, "v", v)


def vectorize(mu: DiscreteMeasure) -> VectorizedMeasure:
    """[x_{1,1},...,x_{1,d},...,x_{M,1},...,x_{M,d}, log a_1,...,log a_M]."""
    v = np.concatenate([mu.supports.ravel(), np.log(mu.weights)])
    return VectorizedMeasure(v=v, dim=mu.dim, num_atoms=mu.num_atoms)


def devectorize(v: np.ndarray, dim: int, num_atoms: int) -> DiscreteMeasure:
    """Inverse of vectorize up to weight renormalization.

    Iterates mix log weights convexly, so the exponentiated block can sum
    well away from 1; renormalize here rather than trip the measure
    constructor's sum tolerance.
    """
    v = np.asarray(v, dtype=np.float64)
    expected = (dim + 1) * num_atoms
    if v.ndim != 1 or v.shape[0] != expected:
        raise ValueError(f"expected a vector of length {expected}, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite entries in vector")
    supports = v[: dim * num_atoms].reshape(num_atoms, dim)
    log_w = v[dim * num_atoms :]
    w = np.exp(log_w - np.max(log_w))
    return DiscreteMeasure(weights=w / w.sum(), supports=supports)


def half_squared_distances(xi: np.ndarray, stored: np.ndarray) -> np.ndarray:
    """0.5 * ||xi - stored_i||^2 per stored row."""
    diff = stored - xi[None, :]
    return 0.5 * np.sum(diff * diff, axis=1)


def hopfield_step(xi: np.ndarray, stored: np.ndarray, beta: float) -> np.ndarray:
    """One attention update: convex recombination of the stored rows under
    softmax(-beta/2 * ||xi - stored_i||^2), computed with max subtraction."""
    xi = np.asarray(xi, dtype=np.float64)
    stored = np.atleast_2d(np.asarray(stored, dtype=np.float64))
    logits = -beta * half_squared_distances(xi, stored)
    shifted = np.exp(logits - np.max(logits))
    return (shifted / shifted.sum()) @ stored


@dataclass(frozen=True)
class EuclideanStep:
    iteration: int
    xi: np.ndarray
    objective: float  # -(1/beta) log sum_i exp(-beta/2 ||xi - x_i||^2)
    scores: np.ndarray  # half squared distances to stored rows; objective is their soft min
    weights: np.ndarray
    step_norm: float  # l2 norm of the update applied at this iteration
    max_change: float  # sup norm of the same update


@dataclass(frozen=True)
class EuclideanTrace:
    steps: tuple[EuclideanStep, ...]
    status: str  # "converged" | "iteration_cap"
    final_vector: np.ndarray
    final: DiscreteMeasure

    @property
    def iterations(self) -> int:
        return len(self.steps)


def retrieve_euclidean(
    query: DiscreteMeasure,
    bank: PatternBank,
    beta: float,
    max_iter: int = 200,
    stop_tol: float = 1e-9,
) -> EuclideanTrace:
    """Iterate the attention update from the vectorized query to a fixed point.

    Stops when the sup-norm change falls below stop_tol or at max_iter.
    Query atoms are vectorized in the order given; no alignment to pattern
    atom order is attempted.
    """
    if query.num_atoms != bank.params.M:
        raise ValueError(
            f"query has {query.num_atoms} atoms but the bank stores {bank.params.M}"
        )
    if query.dim != bank.dim:
        raise ValueError(f"query dim {query.dim} does not match bank dim {bank.dim}")
    stored = np.stack([vectorize(p).v for p in bank.patterns])
    xi = vectorize(query).v
    steps: list[EuclideanStep] = []
    status = "iteration_cap"
    for k in range(max_iter):
        scores = half_squared_distances(xi, stored)
        objective, w = softmin_energy(scores, beta)
        new_xi = w @ stored
        delta = new_xi - xi
        steps.append(
            EuclideanStep(
                iteration=k,
                xi=xi,
                objective=objective,
                scores=scores,
                weights=w,
                step_norm=float(np.linalg.norm(delta)),
                max_change=float(np.max(np.abs(delta))),
            )
        )
        xi = new_xi
        if steps[-1].max_change < stop_tol:
            status = "converged"
            break
    return EuclideanTrace(
        steps=tuple(steps),
        status=status,
        final_vector=xi,
        final=devectorize(xi, query.dim, query.num_atoms),
    )


def euclidean_trace_header(n_patterns: int) -> list[str]:
    return (
        ["iter", "lse_objective"]
        + [f"score_{i}" for i in range(n_patterns)]
        + [f"w_{i}" for i in range(n_patterns)]
        + ["grad_norm", "max_disp", "clipped"]
    )


def write_euclidean_trace_csv(trace: EuclideanTrace, path) -> None:
    if not trace.steps:
        raise ValueError("empty trace")
    n = len(trace.steps[0].scores)
    rows = []
    for step in trace.steps:
        rows.append(
            [step.iteration, step.objective]
            + list(step.scores)
            + list(step.weights)
            + [step.step_norm, step.max_change, 0]
        )
    write_csv(path, euclidean_trace_header(n), rows)
