"""Weighted point clouds and the domain they live in.

A measure is M atoms in R^d: a strictly positive weight vector summing to one
plus an M x d support matrix. The domain is an axis-aligned box or a ball;
validation checks interior weights (above a floor), pairwise atom separation,
and strict interior support placement. All types are immutable values and all
operations are pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .serialize import dump_json

WEIGHT_SUM_RTOL = 1e-9  # construction renormalizes within this, errors beyond
WEIGHT_SUM_TOL = 1e-12  # post-construction guarantee


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DomainSpec:
    """Open bounded convex domain: "box" (lower/upper) or "ball" (center/radius)."""

    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind == "box":
            if self.lower is None or self.upper is None:
                raise ValueError("box domain needs lower and upper bounds")
            lower = _frozen_array(np.atleast_1d(self.lower))
            upper = _frozen_array(np.atleast_1d(self.upper))
            if lower.ndim != 1 or lower.shape != upper.shape:
                raise ValueError("box bounds must be equal-length vectors")
            if not np.all(lower < upper):
                raise ValueError("box requires lower < upper componentwise")
            object.__setattr__(self, "lower", lower)
            object.__setattr__(self, "upper", upper)
            object.__setattr__(self, "center", None)
            object.__setattr__(self, "radius", None)
        elif self.kind == "ball":
            if self.center is None or self.radius is None:
                raise ValueError("ball domain needs center and radius")
            center = _frozen_array(np.atleast_1d(self.center))
            radius = float(self.radius)
            if center.ndim != 1:
                raise ValueError("ball center must be a vector")
            if not (radius > 0 and math.isfinite(radius)):
                raise ValueError("ball radius must be positive and finite")
            object.__setattr__(self, "center", center)
            object.__setattr__(self, "radius", radius)
            object.__setattr__(self, "lower", None)
            object.__setattr__(self, "upper", None)
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def box(cls, lower, upper) -> "DomainSpec":
        return cls(kind="box", lower=lower, upper=upper)

    @classmethod
    def ball(cls, center, radius) -> "DomainSpec":
        return cls(kind="ball", center=center, radius=radius)

    @property
    def dim(self) -> int:
        return len(self.lower) if self.kind == "box" else len(self.center)

    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.upper - self.lower))
        return 2.0 * self.radius

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the boundary per point: positive strictly inside,
        zero on the boundary, negative outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.kind == "box":
            gaps = np.minimum(pts - self.lower, self.upper - pts)
            return np.min(gaps, axis=1)
        return self.radius - np.linalg.norm(pts - self.center, axis=1)

    def contains(self, points: np.ndarray, atol: float = 0.0) -> np.ndarray:
        return self.boundary_distance(points) >= -atol

    def clip(self, points: np.ndarray) -> tuple[np.ndarray, int]:
        """Project points onto the closed domain; returns (points, #moved)."""
        pts = np.array(np.atleast_2d(points), dtype=np.float64)
        if self.kind == "box":
            clipped = np.clip(pts, self.lower, self.upper)
        else:
            offsets = pts - self.center
            norms = np.linalg.norm(offsets, axis=1)
            factor = np.ones_like(norms)
            outside = norms > self.radius
            factor[outside] = self.radius / norms[outside]
            clipped = self.center + offsets * factor[:, None]
        moved = int(np.sum(np.any(clipped != pts, axis=1)))
        return clipped, moved

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        if data["kind"] == "box":
            return cls.box(data["lower"], data["upper"])
        if data["kind"] == "ball":
            return cls.ball(data["center"], data["radius"])
        raise ValueError(f"unknown domain kind {data.get('kind')!r}")


@dataclass(frozen=True)
class MeasureParams:
    """Structural constraints: atom count M, weight floor a_min, separation floor."""

    M: int
    a_min: float
    delta_min: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("M must be an integer >= 2")
        object.__setattr__(self, "M", int(self.M))
        if not (0.0 < self.a_min < 1.0 / self.M):
            raise ValueError("a_min must lie in (0, 1/M)")
        if not (self.delta_min > 0):
            raise ValueError("delta_min must be positive")

    def to_dict(self) -> dict:
        return {"M": self.M, "a_min": self.a_min, "delta_min": self.delta_min}

    @classmethod
    def from_dict(cls, data: dict) -> "MeasureParams":
        return cls(M=data["M"], a_min=data["a_min"], delta_min=data["delta_min"])


@dataclass(frozen=True)
class DiscreteMeasure:
    """M weighted atoms in R^d. Weights must sum to 1 within 1e-9 at
    construction (then renormalized so the stored sum is within 1e-12)."""

    weights: np.ndarray
    supports: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        x = np.array(self.supports, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError("supports must be an M x d matrix")
        if len(w) != len(x):
            raise ValueError(f"{len(w)} weights for {len(x)} support points")
        if len(w) == 0:
            raise ValueError("measure needs at least one atom")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(x)):
            raise ValueError("weights and supports must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_SUM_RTOL:
            raise ValueError(f"weights sum to {total!r}, beyond the 1e-9 tolerance")
        if total != 1.0:
            w = w / total
        object.__setattr__(self, "weights", _frozen_array(w))
        object.__setattr__(self, "supports", _frozen_array(x))

    @property
    def num_atoms(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.supports.shape[1]

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "supports": self.supports.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        return cls(weights=data["weights"], supports=data["supports"])

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "DiscreteMeasure":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class GeometryReport:
    mean: np.ndarray
    min_sep: float
    boundary_dist: float
    max_weight: float
    min_weight: float
    single_atom: bool = False  # min_sep reported as +inf for M < 2


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[str, ...] = ()


def min_pairwise_distance(points: np.ndarray) -> tuple[float, tuple[int, int] | None]:
    """Smallest pairwise Euclidean distance and the achieving index pair."""
    pts = np.asarray(points, dtype=np.float64)
    m = len(pts)
    if m < 2:
        return math.inf, None
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    dist[np.diag_indices(m)] = np.inf
    flat = int(np.argmin(dist))
    i, j = divmod(flat, m)
    return float(dist[i, j]), (min(i, j), max(i, j))


def geometry_report(mu: DiscreteMeasure, dom: DomainSpec) -> GeometryReport:
    if mu.dim != dom.dim:
        raise ValueError(f"measure dim {mu.dim} does not match domain dim {dom.dim}")
    sep, _ = min_pairwise_distance(mu.supports)
    return GeometryReport(
        mean=_frozen_array(mu.weights @ mu.supports),
        min_sep=sep,
        boundary_dist=float(np.min(dom.boundary_distance(mu.supports))),
        max_weight=float(np.max(mu.weights)),
        min_weight=float(np.min(mu.weights)),
        single_atom=mu.num_atoms < 2,
    )


def validate_measure(
    mu: DiscreteMeasure, params: MeasureParams, dom: DomainSpec
) -> ValidationResult:
    """Membership test for the constrained configuration space: weights above
    a_min, pairwise separation above delta_min, supports strictly inside the
    domain. Structural mismatches raise; constraint violations are returned."""
    if mu.dim != dom.dim:
        raise ValueError(f"measure dim {mu.dim} does not match domain dim {dom.dim}")
    if mu.num_atoms != params.M:
        raise ValueError(f"measure has {mu.num_atoms} atoms, params specify {params.M}")
    violations: list[str] = []
    total = float(mu.weights.sum())
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        violations.append(f"weights sum to {total!r}, off by more than 1e-12")
    low = np.where(mu.weights <= params.a_min)[0]
    for idx in low:
        violations.append(
            f"weight below a_min at atom {idx}: {mu.weights[idx]!r} <= {params.a_min!r}"
        )
    sep, pair = min_pairwise_distance(mu.supports)
    if pair is not None and sep <= params.delta_min:
        violations.append(
            f"pairwise separation {sep!r} <= {params.delta_min!r} at atoms {pair[0]},{pair[1]}"
        )
    bdist = dom.boundary_distance(mu.supports)
    for idx in np.where(bdist <= 0)[0]:
        violations.append(
            f"support {idx} not strictly inside the domain (boundary distance {bdist[idx]!r})"
        )
    return ValidationResult(ok=not violations, violations=tuple(violations))


def domain_diameter(dom: DomainSpec) -> float:
    return dom.diameter()


@dataclass(frozen=True)
class PatternBank:
    """Stored patterns plus the shared structural parameters and domain."""

    patterns: tuple[DiscreteMeasure, ...]
    params: MeasureParams
    domain: DomainSpec

    def __post_init__(self):
        patterns = tuple(self.patterns)
        if not patterns:
            raise ValueError("bank needs at least one pattern")
        for i, pat in enumerate(patterns):
            if pat.num_atoms != self.params.M:
                raise ValueError(
                    f"pattern {i} has {pat.num_atoms} atoms, params specify {self.params.M}"
                )
            if pat.dim != self.domain.dim:
                raise ValueError(
                    f"pattern {i} has dim {pat.dim}, domain has dim {self.domain.dim}"
                )
        object.__setattr__(self, "patterns", patterns)

    @property
    def n_patterns(self) -> int:
        return len(self.patterns)

    @property
    def dim(self) -> int:
        return self.domain.dim

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "domain": self.domain.to_dict(),
            "patterns": [p.to_dict() for p in self.patterns],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PatternBank":
        return cls(
            patterns=tuple(DiscreteMeasure.from_dict(p) for p in data["patterns"]),
            params=MeasureParams.from_dict(data["params"]),
            domain=DomainSpec.from_dict(data["domain"]),
        )

    def save(self, path) -> None:
        dump_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "PatternBank":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
