"""Numeric audits of the bounds and identities the retrieval guarantees rest on.

Every audit produces one report with the bound value, the measured value, the
signed slack, and a pass flag. Bound formulas are evaluated with plain
arithmetic from raw inputs; only the measured side touches the solver, so a
solver defect cannot certify itself. Audits that cannot run report "skipped"
with the violated precondition instead of passing silently.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measures import (
    DiscreteMeasure,
    DomainSpec,
    MeasureParams,
    PatternBank,
    min_pairwise_distance,
)
from .retrieval import RetrievalConfig, retrieve, shk_grad, softmin_energy
from .sampling import ConfigurationError, TheoryConstants, separation_stats
from .sinkhorn import (
    SinkhornConfig,
    _cross_state,
    _self_state,
    barycentric_map,
    cost_matrix,
    self_ot_cost,
    sinkhorn_divergence,
)

# gradient components below this magnitude are compared absolutely: near a
# minimizer both sides sit at solver-noise level and a pure ratio is meaningless
ANALYTIC_FLOOR = 1e-4


@dataclass(frozen=True)
class AuditReport:
    name: str
    inputs_digest: str
    bound: float
    measured: float
    slack: float  # signed so that >= -tolerance means satisfied, either direction
    passed: bool
    tolerance: float
    kind: str  # "upper": measured <= bound; "lower": measured >= bound
    skipped: bool = False
    skip_reason: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["details"] = {k: _plain(v) for k, v in self.details.items()}
        return out


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        arr = np.ascontiguousarray(np.atleast_1d(np.asarray(p, dtype=np.float64)))
        h.update(arr.tobytes())
    return h.hexdigest()[:12]


def _report(
    name: str,
    bound: float,
    measured: float,
    kind: str,
    tolerance: float,
    digest: str,
    details: Optional[dict] = None,
) -> AuditReport:
    slack = (bound - measured) if kind == "upper" else (measured - bound)
    return AuditReport(
        name=name,
        inputs_digest=digest,
        bound=float(bound),
        measured=float(measured),
        slack=float(slack),
        passed=bool(slack >= -tolerance),
        tolerance=float(tolerance),
        kind=kind,
        details=details or {},
    )


def skipped_report(name: str, reason: str, digest: str = "") -> AuditReport:
    return AuditReport(
        name=name,
        inputs_digest=digest,
        bound=math.nan,
        measured=math.nan,
        slack=math.nan,
        passed=False,
        tolerance=math.nan,
        kind="upper",
        skipped=True,
        skip_reason=reason,
    )


def audit_self_ot(
    mu: DiscreteMeasure, epsilon: float, ot_cfg: Optional[SinkhornConfig] = None, tolerance: float = 1e-9
) -> AuditReport:
    """Self transport cost against eps * entropy(weights) (which is itself
    below eps * log M, the coarser stated bound)."""
    cfg = ot_cfg or SinkhornConfig(epsilon=epsilon)
    measured = self_ot_cost(mu, cfg)
    entropy = float(-np.sum(mu.weights * np.log(mu.weights)))
    bound = epsilon * entropy
    return _report(
        "self_transport_upper",
        bound,
        measured,
        "upper",
        tolerance,
        _digest(mu.weights, mu.supports, epsilon),
        details={"log_m_bound": epsilon * math.log(mu.num_atoms), "entropy_bound": bound},
    )


def audit_mean_bound(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    epsilon: float,
    ot_cfg: Optional[SinkhornConfig] = None,
    tolerance: float = 1e-9,
) -> AuditReport:
    """Divergence >= half squared mean distance minus the self-cost ceilings."""
    cfg = ot_cfg or SinkhornConfig(epsilon=epsilon)
    measured = sinkhorn_divergence(mu, nu, cfg)
    gap = mu.weights @ mu.supports - nu.weights @ nu.supports
    bound = 0.5 * float(gap @ gap) - 0.5 * epsilon * (
        math.log(mu.num_atoms) + math.log(nu.num_atoms)
    )
    return _report(
        "mean_separation_lower",
        bound,
        measured,
        "lower",
        tolerance,
        _digest(mu.weights, mu.supports, nu.weights, nu.supports, epsilon),
        details={"mean_gap_sq": float(gap @ gap)},
    )


def audit_softmin_lipschitz(
    z: Sequence[float], zprime: Sequence[float], beta: float, tolerance: float = 1e-12
) -> AuditReport:
    """|softmin(z) - softmin(z')| <= sup-norm of z - z'."""
    z = np.asarray(z, dtype=np.float64)
    zprime = np.asarray(zprime, dtype=np.float64)
    a, _ = softmin_energy(z, beta)
    b, _ = softmin_energy(zprime, beta)
    measured = abs(a - b)
    bound = float(np.max(np.abs(z - zprime)))
    return _report(
        "softmin_contraction", bound, measured, "upper", tolerance, _digest(z, zprime, beta)
    )


def audit_interference(
    divergences: Sequence[float], beta: float, tolerance: float = 1e-12
) -> list[AuditReport]:
    """Crosstalk bounds from the divergence gap: the best pattern's Gibbs
    weight is at least 1/(1+(N-1)e^(-beta gap)), and the energy sits within
    (1/beta) log(1+(N-1)e^(-beta gap)) below the smallest divergence."""
    vals = np.asarray(divergences, dtype=np.float64)
    n = vals.shape[0]
    energy, w = softmin_energy(vals, beta)
    best = int(np.argmin(vals))
    if n == 1:
        gap = math.inf
        attenuation = 0.0
    else:
        gap = float(np.min(np.delete(vals, best)) - vals[best])
        attenuation = (n - 1) * math.exp(-beta * gap)
    digest = _digest(vals, beta)
    floor = _report(
        "gibbs_weight_floor",
        1.0 / (1.0 + attenuation),
        float(w[best]),
        "lower",
        tolerance,
        digest,
        details={"gap": gap, "best": best},
    )
    ceiling = _report(
        "energy_gap_ceiling",
        math.log1p(attenuation) / beta,
        float(vals[best]) - energy,
        "upper",
        tolerance,
        digest,
        details={"gap": gap, "best": best},
    )
    return [floor, ceiling]


def single_pattern_gradient(
    xi: DiscreteMeasure, pattern: DiscreteMeasure, ot_cfg: SinkhornConfig
) -> tuple[np.ndarray, float, np.ndarray]:
    """First-variation values z, their mean zbar, and per-atom position grads
    of the divergence to one pattern, at xi."""
    sol, p_cross, _ = _cross_state(xi, pattern, ot_cfg)
    sp, p_self, _ = _self_state(xi, ot_cfg)
    z = sol.f - sp.f_sym
    zbar = float(xi.weights @ z)
    t_cross = barycentric_map(p_cross, xi.weights, pattern.supports)
    t_self = barycentric_map(p_self, xi.weights, xi.supports)
    return z, zbar, t_self - t_cross


def audit_grad_bound(
    xi: DiscreteMeasure,
    pattern: DiscreteMeasure,
    lam: float,
    dom: DomainSpec,
    ot_cfg: SinkhornConfig,
    tolerance: float = 1e-9,
) -> AuditReport:
    """Metric gradient norm of one pattern's divergence against D sqrt(1 + D^2/lam^2)."""
    z, zbar, zeta = single_pattern_gradient(xi, pattern, ot_cfg)
    measured = shk_grad(xi.weights, z, zbar, zeta, lam).norm
    diameter = dom.diameter()
    bound = diameter * math.sqrt(1.0 + diameter * diameter / (lam * lam))
    return _report(
        "gradient_norm_bound",
        bound,
        measured,
        "upper",
        tolerance,
        _digest(xi.weights, xi.supports, pattern.weights, pattern.supports, lam, ot_cfg.epsilon),
        details={"diameter": diameter},
    )


def empirical_constants(bank: PatternBank, epsilon: float) -> TheoryConstants:
    """Constants instantiated from the bank's observed mean separation.

    For banks not produced by the sampler the a-priori separation scale does
    not apply; the smallest pairwise mean distance plays its role.
    """
    if bank.n_patterns < 2:
        raise ValueError("need at least 2 patterns to measure separation")
    means = np.stack([p.weights @ p.supports for p in bank.patterns])
    d_min, _ = min_pairwise_distance(means)
    r = d_min * d_min / 32.0 - epsilon * math.log(bank.params.M)
    return TheoryConstants(
        n_capacity=bank.n_patterns, d_min=float(d_min), r=float(r), delta=float(d_min * d_min / 4.0)
    )


def audit_margin_separation(
    bank: PatternBank,
    consts: TheoryConstants,
    probe_count: int,
    seed: int,
    ot_cfg: SinkhornConfig,
    tolerance: float = 1e-9,
) -> AuditReport:
    """Probes inside each pattern's divergence-r neighbourhood must see every
    other pattern at least delta further away (in divergence).

    Requires the mean-separation event and a positive neighbourhood radius;
    otherwise the claim is vacuous and the audit reports skipped.
    """
    digest = _digest(
        np.concatenate([p.supports.ravel() for p in bank.patterns]),
        consts.d_min,
        probe_count,
        seed,
        ot_cfg.epsilon,
    )
    stats = separation_stats(bank, consts)
    if not stats.event_a:
        return skipped_report(
            "margin_separation",
            f"mean-separation event fails: pair {stats.closest_pair} at distance "
            f"{stats.min_mean_distance} < d_min {consts.d_min}",
            digest,
        )
    if not consts.r > 0:
        return skipped_report(
            "margin_separation",
            f"neighbourhood radius r = {consts.r} is not positive; epsilon too large "
            "for this separation",
            digest,
        )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    worst = math.inf
    worst_detail = None
    per_pattern = []
    for i, pattern in enumerate(bank.patterns):
        pattern_worst = math.inf
        for probe_idx in range(probe_count):
            if probe_idx == 0:
                probe = pattern  # the pattern itself always sits in its own neighbourhood
            else:
                scale = consts.d_min / 8.0
                probe = None
                for _ in range(40):
                    jitter = scale * rng.standard_normal(pattern.supports.shape)
                    candidate = DiscreteMeasure(
                        weights=pattern.weights, supports=pattern.supports + jitter
                    )
                    if sinkhorn_divergence(candidate, pattern, ot_cfg) <= consts.r:
                        probe = candidate
                        break
                    scale *= 0.5
                if probe is None:
                    return skipped_report(
                        "margin_separation",
                        f"could not place a probe within radius r = {consts.r} of "
                        f"pattern {i} after 40 jitter halvings",
                        digest,
                    )
            own = sinkhorn_divergence(probe, pattern, ot_cfg)
            for j, other in enumerate(bank.patterns):
                if j == i:
                    continue
                gap = sinkhorn_divergence(probe, other, ot_cfg) - own
                if gap < pattern_worst:
                    pattern_worst = gap
                if gap < worst:
                    worst = gap
                    worst_detail = {"pattern": i, "other": j, "probe": probe_idx}
        per_pattern.append(pattern_worst)
    return _report(
        "margin_separation",
        consts.delta,
        worst,
        "lower",
        tolerance,
        digest,
        details={
            "r": consts.r,
            "per_pattern_worst_gap": per_pattern,
            "worst": worst_detail,
            "min_mean_distance": stats.min_mean_distance,
        },
    )


def _empirical_gap(bank: PatternBank, index: int, ot_cfg: SinkhornConfig) -> float:
    """Smallest divergence from pattern `index` to any other pattern."""
    gaps = [
        sinkhorn_divergence(bank.patterns[index], other, ot_cfg)
        for j, other in enumerate(bank.patterns)
        if j != index
    ]
    return min(gaps) if gaps else math.inf


def _divergence_near_identity(
    mu: DiscreteMeasure, nu: DiscreteMeasure, cfg: SinkhornConfig
) -> float:
    """Debiased divergence for measures expected to nearly coincide.

    A cold-started cross solve on a near-identical pair excites a slowly
    contracting antisymmetric error mode (the coupling is almost a diagonal
    matching), leaving value noise well above the convergence tolerance.
    Warm-starting both cross potentials at the measures' own symmetric self
    potentials puts that mode at its true, tiny amplitude from the start.
    """
    sp_mu, _, self_mu = _self_state(mu, cfg)
    sp_nu, _, self_nu = _self_state(nu, cfg)
    _, _, cross = _cross_state(mu, nu, cfg, warm_start=(sp_mu.f_sym, sp_nu.f_sym))
    return cross - 0.5 * self_mu - 0.5 * self_nu


def audit_fixed_point(
    bank: PatternBank,
    index: int,
    retr_cfg: RetrievalConfig,
    ot_cfg: SinkhornConfig,
    tolerance: float = 1e-7,
) -> AuditReport:
    """Divergence moved by ONE retrieval update started at a stored pattern,
    against min{e^(eta D^2/lam^2), 1/sqrt(a_min)} eta G^2 (N-1) e^(-beta gap)."""
    pattern = bank.patterns[index]
    n = bank.n_patterns
    digest = _digest(
        pattern.weights, pattern.supports, index, retr_cfg.beta, retr_cfg.eta, ot_cfg.epsilon
    )
    one_step = dataclasses.replace(retr_cfg, max_iter=1)
    trace = retrieve(pattern, bank, one_step, ot_cfg)
    measured = _divergence_near_identity(pattern, trace.final, ot_cfg)
    if n == 1:
        bound = 0.0
        gap = math.inf
    else:
        gap = _empirical_gap(bank, index, ot_cfg)
        diameter = bank.domain.diameter()
        lam = retr_cfg.lam
        big_g_sq = diameter * diameter * (1.0 + diameter * diameter / (lam * lam))
        factor = min(
            math.exp(min(retr_cfg.eta * diameter * diameter / (lam * lam), 700.0)),
            1.0 / math.sqrt(bank.params.a_min),
        )
        bound = factor * retr_cfg.eta * big_g_sq * (n - 1) * math.exp(-retr_cfg.beta * gap)
    return _report(
        "fixed_point_drift",
        bound,
        measured,
        "upper",
        tolerance,
        digest,
        details={"empirical_gap": gap, "pattern": index},
    )


def audit_minimizer_proximity(
    bank: PatternBank,
    index: int,
    retr_cfg: RetrievalConfig,
    ot_cfg: SinkhornConfig,
    tolerance: float = 1e-7,
) -> AuditReport:
    """Divergence between the converged retrieval limit from a stored pattern
    and that pattern, against (1/beta) log(1 + (N-1) e^(-beta gap))."""
    pattern = bank.patterns[index]
    n = bank.n_patterns
    digest = _digest(
        pattern.weights, pattern.supports, index, retr_cfg.beta, retr_cfg.eta, ot_cfg.epsilon
    )
    trace = retrieve(pattern, bank, retr_cfg, ot_cfg)
    if trace.status != "converged":
        return skipped_report(
            "minimizer_proximity",
            f"retrieval from pattern {index} hit the iteration cap before the "
            "stopping tolerances; the limit point is not certified",
            digest,
        )
    measured = _divergence_near_identity(trace.final, pattern, ot_cfg)
    if n == 1:
        bound = 0.0
        gap = math.inf
    else:
        gap = _empirical_gap(bank, index, ot_cfg)
        bound = math.log1p((n - 1) * math.exp(-retr_cfg.beta * gap)) / retr_cfg.beta
    return _report(
        "minimizer_proximity",
        bound,
        measured,
        "upper",
        tolerance,
        digest,
        details={"empirical_gap": gap, "pattern": index, "iterations": trace.iterations},
    )


def audit_fd_gradients(
    xi: DiscreteMeasure,
    pattern: DiscreteMeasure,
    epsilon: float,
    h: float = 1e-5,
    target: float = 1e-3,
    tolerance: float = 0.0,
) -> AuditReport:
    """Centered finite differences of the divergence against the closed-form
    gradients: per-coordinate position derivatives a_m * (map difference), and
    weight-pair directional derivatives z_m - z_n.

    Refuses epsilon below 1e-3: sharper potentials make the difference
    quotients unreliable at any workable h.
    """
    digest = _digest(xi.weights, xi.supports, pattern.weights, pattern.supports, epsilon, h)
    if epsilon < 1e-3:
        return skipped_report(
            "fd_gradient_match",
            f"epsilon {epsilon} below the 1e-3 floor for finite differencing",
            digest,
        )
    cfg = SinkhornConfig(epsilon=epsilon, max_iter=5000, tol=1e-13)
    sol, p_cross, cross_value = _cross_state(xi, pattern, cfg)
    sp, _, self_value = _self_state(xi, cfg)
    t_cross = barycentric_map(p_cross, xi.weights, pattern.supports)
    _, p_self, _ = _self_state(xi, cfg, warm_start=sp.f_sym)
    t_self = barycentric_map(p_self, xi.weights, xi.supports)
    analytic_pos = xi.weights[:, None] * (t_self - t_cross)
    z = sol.f - sp.f_sym

    warm_cross = (sol.f, sol.g)
    warm_self = sp.f_sym
    # Near-symmetric cross problems (xi close to the pattern) stall: the
    # alternating updates leave a slow antisymmetric error mode that floors
    # the marginal error around 1e-5 while the primal value stays accurate
    # to ~1e-8.  The probes therefore track the worst residual instead of
    # demanding the converged flag; warm starts keep the residual common
    # across the +h/-h pair so it cancels in the centered difference.
    probe_residual = [sol.marginal_err, sp.residual]

    def biased_divergence(measure: DiscreteMeasure) -> float:
        # the pattern's self cost is constant under perturbation of `measure`
        # and cancels in every centered difference, so it is omitted
        c_sol, _, c_val = _cross_state(measure, pattern, cfg, warm_start=warm_cross)
        s_sp, _, s_val = _self_state(measure, cfg, warm_start=warm_self)
        probe_residual[0] = max(probe_residual[0], c_sol.marginal_err)
        probe_residual[1] = max(probe_residual[1], s_sp.residual)
        return c_val - 0.5 * s_val

    m, d = xi.supports.shape
    fd_pos = np.empty((m, d))
    for atom in range(m):
        for coord in range(d):
            bumped = xi.supports.copy()
            bumped[atom, coord] += h
            plus = biased_divergence(DiscreteMeasure(weights=xi.weights, supports=bumped))
            bumped[atom, coord] -= 2 * h
            minus = biased_divergence(DiscreteMeasure(weights=xi.weights, supports=bumped))
            fd_pos[atom, coord] = (plus - minus) / (2.0 * h)
    denom = max(
        float(np.max(np.abs(analytic_pos))), float(np.max(np.abs(fd_pos))), ANALYTIC_FLOOR
    )
    rel_pos = float(np.max(np.abs(fd_pos - analytic_pos))) / denom

    pairs = [(0, 1)] + ([(1, 2)] if m > 2 else [])
    rel_w = 0.0
    weight_details = []
    for (p_idx, q_idx) in pairs:
        if min(xi.weights[p_idx], xi.weights[q_idx]) <= 2 * h:
            continue
        direction = np.zeros(m)
        direction[p_idx] = 1.0
        direction[q_idx] = -1.0
        plus = biased_divergence(
            DiscreteMeasure(weights=xi.weights + h * direction, supports=xi.supports)
        )
        minus = biased_divergence(
            DiscreteMeasure(weights=xi.weights - h * direction, supports=xi.supports)
        )
        fd = (plus - minus) / (2.0 * h)
        an = float(z[p_idx] - z[q_idx])
        rel = abs(fd - an) / max(abs(an), abs(fd), ANALYTIC_FLOOR)
        weight_details.append({"pair": (p_idx, q_idx), "fd": fd, "analytic": an, "rel": rel})
        rel_w = max(rel_w, rel)

    measured = max(rel_pos, rel_w)
    return _report(
        "fd_gradient_match",
        target,
        measured,
        "upper",
        tolerance,
        digest,
        details={
            "rel_position": rel_pos,
            "rel_weight": rel_w,
            "h": h,
            "epsilon": epsilon,
            "weight_pairs": weight_details,
            "worst_cross_marginal_err": probe_residual[0],
            "worst_self_residual": probe_residual[1],
        },
    )


@dataclass(frozen=True)
class EtaRetResult:
    eta_ret: float
    r_loc: float
    weight_term: float  # (lam^2 / 2D^2) log((min weight - tau)/a_min)
    geometry_term: float  # (1/2D) min{boundary margin - delta, separation - 2 delta - delta_min}
    min_weight: float
    boundary_distance: float
    min_separation: float


def eta_ret(
    pattern: DiscreteMeasure,
    delta: float,
    tau: float,
    lam: float,
    dom: DomainSpec,
    params: MeasureParams,
    epsilon: float,
) -> EtaRetResult:
    """Retrieval step-size ceiling and the local basin radius r_loc(delta, tau).

    Rejects (delta, tau) outside their stated feasible ranges, naming the
    violated inequality.
    """
    boundary = float(np.min(dom.boundary_distance(pattern.supports)))
    if boundary <= 0:
        raise ConfigurationError("pattern atoms must lie strictly inside the domain")
    sep, _ = min_pairwise_distance(pattern.supports)
    sep = float(sep)
    if not sep > params.delta_min:
        raise ConfigurationError(
            f"pattern atom separation {sep} must exceed delta_min {params.delta_min}"
        )
    wmin = float(np.min(pattern.weights))
    margin = wmin - params.a_min
    if not margin > 0:
        raise ConfigurationError(
            f"min weight {wmin} must exceed a_min {params.a_min} for a usable tau range"
        )
    delta_cap = min(boundary, (sep - params.delta_min) / 2.0)
    if not 0 < delta < delta_cap:
        raise ConfigurationError(
            f"delta must satisfy 0 < delta < min(boundary distance, (separation - "
            f"delta_min)/2) = {delta_cap}; got {delta}"
        )
    if not 0 < tau < margin:
        raise ConfigurationError(
            f"tau must satisfy 0 < tau < min weight - a_min = {margin}; got {tau}"
        )
    diameter = dom.diameter()
    weight_term = (lam * lam / (2.0 * diameter * diameter)) * math.log((wmin - tau) / params.a_min)
    geometry_term = (1.0 / (2.0 * diameter)) * min(
        boundary - delta, sep - 2.0 * delta - params.delta_min
    )
    log_m = math.log(pattern.num_atoms)
    r_loc = min(
        params.a_min * delta * delta / 2.0 - epsilon * log_m,
        tau * (sep - delta) ** 2 / 4.0 - epsilon * log_m,
    )
    return EtaRetResult(
        eta_ret=min(weight_term, geometry_term),
        r_loc=r_loc,
        weight_term=weight_term,
        geometry_term=geometry_term,
        min_weight=wmin,
        boundary_distance=boundary,
        min_separation=sep,
    )


def _random_measure(
    rng: np.random.Generator, m: int, dom: DomainSpec, shrink: float = 0.9
) -> DiscreteMeasure:
    """Weights flat-Dirichlet, supports uniform in a shrunk copy of the domain."""
    if dom.kind == "box":
        lo = np.asarray(dom.lower)
        hi = np.asarray(dom.upper)
        mid = (lo + hi) / 2.0
        half = (hi - lo) / 2.0 * shrink
        supports = mid + (2.0 * rng.random((m, len(lo))) - 1.0) * half
    else:
        center = np.asarray(dom.center)
        d = len(center)
        direction = rng.standard_normal((m, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = dom.radius * shrink * rng.random(m) ** (1.0 / d)
        supports = center + direction * radii[:, None]
    return DiscreteMeasure(weights=rng.dirichlet(np.ones(m)), supports=supports)


def suite_bounds(
    bank: PatternBank, ot_cfg: SinkhornConfig, seed: int, n_random: int = 25
) -> list[AuditReport]:
    """Self-cost, mean-separation, softmin, and gradient-norm audits over the
    bank's patterns plus seeded random instances in its domain."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    eps = ot_cfg.epsilon
    reports = []
    for p in bank.patterns:
        reports.append(audit_self_ot(p, eps, ot_cfg))
    for _ in range(n_random):
        mu = _random_measure(rng, bank.params.M, bank.domain)
        nu = _random_measure(rng, bank.params.M, bank.domain)
        reports.append(audit_mean_bound(mu, nu, eps, ot_cfg))
    for _ in range(n_random):
        z = rng.standard_normal(bank.n_patterns) * 3.0
        zp = z + rng.standard_normal(bank.n_patterns) * rng.random()
        beta = float(rng.choice([1.0, 50.0, 1000.0]))
        reports.append(audit_softmin_lipschitz(z, zp, beta))
    for i, p in enumerate(bank.patterns):
        xi = _random_measure(rng, bank.params.M, bank.domain)
        reports.append(audit_grad_bound(xi, p, 1.0, bank.domain, ot_cfg))
    for _ in range(n_random):
        vals = rng.random(bank.n_patterns) * 2.0
        beta = float(rng.choice([1.0, 10.0, 50.0]))
        reports.extend(audit_interference(vals, beta))
    return reports


def suite_gradients(bank: PatternBank, epsilon: float, seed: int, count: int = 2) -> list[AuditReport]:
    """Finite-difference audits at jittered copies of `count` patterns.

    The probe pair is a pattern against a jittered copy of itself, so the
    optimal coupling is near-diagonal when the blur is far below the
    pattern's own cost scale and the alternating solver stalls there.  Each
    probe therefore runs at the caller's epsilon floored at half the mean
    self-cost of the pattern, where the coupling mixes and the difference
    quotients resolve.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    reports = []
    for p in bank.patterns[: max(1, count)]:
        xi = DiscreteMeasure(
            weights=p.weights, supports=p.supports + 0.1 * rng.standard_normal(p.supports.shape)
        )
        eps_probe = max(epsilon, 0.5 * float(cost_matrix(p.supports, p.supports).mean()))
        reports.append(audit_fd_gradients(xi, p, eps_probe))
    return reports


def suite_separation(
    bank: PatternBank, epsilon: float, ot_cfg: SinkhornConfig, seed: int, probes: int = 2
) -> list[AuditReport]:
    if bank.n_patterns < 2:
        return [skipped_report("margin_separation", "bank has fewer than 2 patterns")]
    consts = empirical_constants(bank, epsilon)
    return [audit_margin_separation(bank, consts, probes, seed, ot_cfg)]


def suite_fixed_point(
    bank: PatternBank, retr_cfg: RetrievalConfig, ot_cfg: SinkhornConfig
) -> list[AuditReport]:
    reports = []
    for i in range(bank.n_patterns):
        reports.append(audit_fixed_point(bank, i, retr_cfg, ot_cfg))
        reports.append(audit_minimizer_proximity(bank, i, retr_cfg, ot_cfg))
    return reports


decay_seed_tag = 815  # entropy prefix separating this audit's RNG stream


def decay_instance(seed: int) -> tuple[PatternBank, DiscreteMeasure]:
    """One margin-separated retrieval instance for the descent/decay audit.

    Three tight four-atom clouds sit on a circle of radius 0.6; each cloud's
    atoms occupy a small circle of radius 0.02, so at blur 0.5 every transport
    plan factorizes and all atoms share one velocity. The query is pattern 0
    under a rigid random offset. That keeps the dynamics inside the uniformly
    contracting translation mode: per-atom noise would also excite cloud-shape
    modes, which relax at near-unit rates under this much blur, and their
    mixture decays as a sum of exponentials no single line fits.
    """
    gen = np.random.default_rng(np.random.SeedSequence([decay_seed_tag, seed]))
    angles = gen.uniform(0, 2 * np.pi) + np.arange(3) * (2 * np.pi / 3)
    means = 0.6 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pats = []
    for mu in means:
        phase = gen.uniform(0, 2 * np.pi) + np.arange(4) * (np.pi / 2)
        pts = mu + 0.02 * np.stack([np.cos(phase), np.sin(phase)], axis=1)
        pats.append(DiscreteMeasure(weights=gen.dirichlet(np.full(4, 5.0)), supports=pts))
    dom = DomainSpec(kind="box", lower=np.full(2, -2.0), upper=np.full(2, 2.0))
    bank = PatternBank(
        patterns=tuple(pats),
        params=MeasureParams(M=4, a_min=0.01, delta_min=0.02),
        domain=dom,
    )
    offset = gen.normal(0.0, 0.08, size=2)
    if np.linalg.norm(offset) < 1e-3:  # degenerate query, nothing to retrieve
        offset = np.array([0.08, 0.0])
    query = DiscreteMeasure(
        weights=pats[0].weights, supports=pats[0].supports + offset[None, :]
    )
    return bank, query


def audit_descent_decay(
    seed: int,
    retr_cfg: Optional[RetrievalConfig] = None,
    ot_cfg: Optional[SinkhornConfig] = None,
) -> list[AuditReport]:
    """Retrieve one decay instance; check the energy never rises and that the
    log divergence to the final iterate falls linearly over the late window.

    Two reports. "energy_monotone": measured is the largest per-step energy
    increase, bound 0, tolerance 1e-8. "decay_linear_fit": measured is the R^2
    of regressing log S(xi_k, xi_K) on k over the final two thirds of the
    iterates (k = K excluded, its divergence is exactly zero), bound 0.9 from
    below; a nonnegative fitted slope reports R^2 as 0 since the fit would be
    tracking growth, not decay.
    """
    retr_cfg = retr_cfg or RetrievalConfig(beta=50.0, eta=0.05, lam=1.0, max_iter=500)
    ot_cfg = ot_cfg or SinkhornConfig(epsilon=0.5, max_iter=4000, tol=1e-12)
    bank, query = decay_instance(seed)
    digest = _digest(query.weights, query.supports, [seed], [retr_cfg.eta])
    trace = retrieve(query, bank, retr_cfg, ot_cfg)
    energies = trace.energies
    worst_rise = float(np.max(np.diff(energies))) if len(energies) > 1 else 0.0
    mono = _report(
        "energy_monotone", 0.0, worst_rise, "upper", 1e-8, digest,
        details={"iterations": trace.iterations, "status": trace.status},
    )
    K = trace.iterations - 1
    if K < 9:
        return [mono, skipped_report("decay_linear_fit", "trace too short to regress", digest)]
    ks = np.arange(K - (2 * K) // 3, K)
    values = np.array([
        _divergence_near_identity(trace.steps[k].measure, trace.final, ot_cfg)
        for k in ks
    ])
    if np.any(values <= 0):  # at or below solver noise, the log is meaningless
        return [mono, skipped_report("decay_linear_fit", "window values hit solver noise", digest)]
    logs = np.log(values)
    design = np.vstack([ks.astype(float), np.ones(len(ks))]).T
    coef, residual, *_ = np.linalg.lstsq(design, logs, rcond=None)
    total = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(residual[0]) / total if total > 0 else 0.0
    slope = float(coef[0])
    fit = _report(
        "decay_linear_fit", 0.9, r2 if slope < 0 else 0.0, "lower", 0.0, digest,
        details={
            "slope": slope,
            "r_squared": r2,
            "window": [int(ks[0]), int(ks[-1])],
            "value_range": [float(values.min()), float(values.max())],
            "iterations": trace.iterations,
            "status": trace.status,
        },
    )
    return [mono, fit]


def suite_descent_decay(
    count: int = 10,
    base_seed: int = 0,
    retr_cfg: Optional[RetrievalConfig] = None,
    ot_cfg: Optional[SinkhornConfig] = None,
) -> list[AuditReport]:
    """Descent and decay reports over `count` seeded instances."""
    reports = []
    for s in range(base_seed, base_seed + count):
        reports.extend(audit_descent_decay(s, retr_cfg, ot_cfg))
    return reports


def summarize(reports: Sequence[AuditReport]) -> dict:
    ran = [r for r in reports if not r.skipped]
    return {
        "total": len(reports),
        "ran": len(ran),
        "passed": sum(1 for r in ran if r.passed),
        "failed": sum(1 for r in ran if not r.passed),
        "skipped": len(reports) - len(ran),
        "all_passed": all(r.passed for r in ran),
    }
