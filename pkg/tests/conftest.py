import numpy as np
import pytest

from sinkmem import (
    DiscreteMeasure,
    DomainSpec,
    MeasureParams,
    PatternBank,
    SinkhornConfig,
)


@pytest.fixture
def pinned_pair():
    """Uniform 2-atom pair on the unit square's bottom and top edges."""
    mu = DiscreteMeasure(weights=(0.5, 0.5), supports=((0.0, 0.0), (1.0, 0.0)))
    nu = DiscreteMeasure(weights=(0.5, 0.5), supports=((0.0, 1.0), (1.0, 1.0)))
    return mu, nu


@pytest.fixture
def ot_tight():
    return SinkhornConfig(epsilon=0.05, max_iter=10_000, tol=1e-14)


@pytest.fixture
def ot_default():
    return SinkhornConfig(epsilon=0.05, max_iter=120, tol=1e-9)


def random_measure(gen, m, lo=-2.0, hi=2.0, d=2):
    return DiscreteMeasure(
        weights=gen.dirichlet(np.ones(m)),
        supports=gen.uniform(lo, hi, size=(m, d)),
    )


def save_compact_bank(path):
    """Three tight clouds close enough that every solve converges under the
    command line's default iteration cap. Saved to disk for CLI tests."""
    gen = np.random.default_rng(11)
    centers = np.array([(-1.0, -1.0), (1.0, -1.0), (0.0, 1.5)])
    patterns = []
    for c in centers:
        supports = c + gen.uniform(-0.1, 0.1, (3, 2))
        weights = gen.dirichlet(np.full(3, 5.0))
        patterns.append(DiscreteMeasure(weights=weights, supports=supports))
    bank = PatternBank(
        patterns=tuple(patterns),
        params=MeasureParams(M=3, a_min=0.02, delta_min=0.01),
        domain=DomainSpec.box((-2.0, -2.0), (2.0, 2.0)),
    )
    bank.save(path)
    return bank


@pytest.fixture
def tiny_bank():
    """Three well-separated 3-atom clouds in a box, deterministic."""
    gen = np.random.default_rng(7)
    centers = np.array([[-2.0, -2.0], [2.0, -2.0], [0.0, 2.0]])
    pats = []
    for c in centers:
        pts = c + gen.uniform(-0.4, 0.4, size=(3, 2))
        pats.append(DiscreteMeasure(weights=gen.dirichlet(np.full(3, 5.0)), supports=pts))
    return PatternBank(
        patterns=tuple(pats),
        params=MeasureParams(M=3, a_min=0.02, delta_min=0.05),
        domain=DomainSpec.box(np.full(2, -4.0), np.full(2, 4.0)),
    )
