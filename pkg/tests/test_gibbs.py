import math

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from hardtree.errors import CapacityError
from hardtree.gibbs import (MarginalTable, WeightScheme, broadcast_log_prob,
                            broadcast_sample, check_broadcast_equivalence,
                            enumerate_states, subtree_marginals)
from hardtree.rng import make_rng
from hardtree.tree import (BoundaryCondition, Configuration, ModelParams,
                           TreeShape, count_independent_sets)


def test_single_vertex_marginal():
    shape = TreeShape(2, 0)
    tab = subtree_marginals(shape, WeightScheme.uniform(3.0))
    assert abs(tab.p_occ[0] - 0.75) <= 1e-15
    assert abs(tab.log_z - math.log(4.0)) <= 1e-12


def test_star_free_marginal():
    # h=1, b=2, lambda=1: Z = 5, root marginal 1/5
    shape = TreeShape(2, 1)
    tab = subtree_marginals(shape, WeightScheme.uniform(1.0))
    assert abs(tab.p_occ[0] - 0.2) <= 1e-12
    assert abs(tab.log_z - math.log(5.0)) <= 1e-12


def test_broadcast_scheme_fixed_point():
    # internal lambda=4, leaf omega=1: conditional occupancy 1/2 everywhere
    params = ModelParams.from_omega(2, 1.0)
    for h in (1, 2, 3, 5):
        shape = TreeShape(2, h)
        tab = subtree_marginals(shape, WeightScheme.broadcast(params))
        assert np.max(np.abs(tab.p_cond - 0.5)) <= 1e-12 * h + 1e-12


def test_enumeration_tiny():
    shape = TreeShape(2, 0)
    space = enumerate_states(shape, WeightScheme.uniform(1.0))
    assert len(space) == 2
    assert np.allclose(space.probs, [0.5, 0.5])

    shape = TreeShape(2, 1)
    space = enumerate_states(shape, WeightScheme.uniform(1.0))
    assert len(space) == 5
    assert np.allclose(space.probs, np.full(5, 0.2), atol=1e-14)


def test_enumeration_boundary_forces_single_state():
    shape = TreeShape(2, 1)
    bnd = BoundaryCondition.explicit([True, True])
    space = enumerate_states(shape, WeightScheme.uniform(1.0), bnd)
    assert len(space) == 1
    assert space.probs[0] == 1.0
    cfg = space.config(0)
    assert not cfg.occ[0] and cfg.occ[1] and cfg.occ[2]


def test_enumeration_capacity_error():
    shape = TreeShape(2, 5)
    with pytest.raises(CapacityError) as exc:
        enumerate_states(shape, WeightScheme.uniform(1.0))
    assert exc.value.estimate == count_independent_sets(shape)


@pytest.mark.parametrize("b,h", [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2)])
@pytest.mark.parametrize("lam", [0.5, 1.0, 4.0])
def test_marginals_match_enumeration(b, h, lam):
    shape = TreeShape(b, h)
    scheme = WeightScheme.uniform(lam)
    tab = subtree_marginals(shape, scheme)
    space = enumerate_states(shape, scheme)
    occm = space.occupancy_matrix()
    p_enum = space.probs @ occm
    assert np.max(np.abs(p_enum - tab.p_occ)) <= 1e-10
    # log Z agrees with the enumeration normalizer
    lz = np.logaddexp.reduce(space.log_weights)
    assert abs(lz - tab.log_z) <= 1e-10


def test_marginals_match_enumeration_with_boundary():
    shape = TreeShape(2, 2)
    scheme = WeightScheme.uniform(1.5)
    rng = make_rng(5)
    for _ in range(6):
        bits = rng.random(4) < 0.5
        bnd = BoundaryCondition.explicit(bits)
        tab = subtree_marginals(shape, scheme, bnd)
        space = enumerate_states(shape, scheme, bnd)
        occm = space.occupancy_matrix()
        p_enum = space.probs @ occm
        assert np.max(np.abs(p_enum - tab.p_occ)) <= 1e-10


def test_occupied_vertex_forces_children():
    # under a boundary with an occupied leaf, the parent's marginal is 0
    shape = TreeShape(2, 1)
    bnd = BoundaryCondition.explicit([True, False])
    tab = subtree_marginals(shape, WeightScheme.uniform(1.0), bnd)
    assert tab.p_occ[0] == 0.0
    assert tab.p_occ[1] == 1.0


def test_ratio_sanity_marginals_vs_enumeration():
    # mu(r=1)/(omega*mu(r=0)) computed both ways
    params = ModelParams.from_omega(3, 0.7)
    shape = TreeShape(3, 2)
    scheme = WeightScheme.uniform(params.lam)
    tab = subtree_marginals(shape, scheme)
    space = enumerate_states(shape, scheme)
    occm = space.occupancy_matrix()
    p_root = float(space.probs @ occm[:, 0])
    q_dp = tab.p_occ[0] / (params.omega * (1 - tab.p_occ[0]))
    q_en = p_root / (params.omega * (1 - p_root))
    assert abs(q_dp - q_en) <= 1e-10


def test_broadcast_sample_degenerate():
    shape = TreeShape(2, 2)
    cfg = broadcast_sample(shape, 0.0, seed=1)
    assert cfg.count() == 0
    cfg = broadcast_sample(shape, math.inf, seed=1)
    # forced alternation: root and grandchildren occupied
    assert cfg.occ[0]
    assert not cfg.occ[1] and not cfg.occ[2]
    assert cfg.occ[3:].all()


def test_broadcast_sample_deterministic_given_seed():
    shape = TreeShape(3, 3)
    a = broadcast_sample(shape, 0.8, seed=42)
    b = broadcast_sample(shape, 0.8, seed=42)
    c = broadcast_sample(shape, 0.8, seed=43)
    assert a == b
    assert a != c


def test_broadcast_sample_root_frequency():
    shape = TreeShape(2, 2)
    rng = make_rng(2024)
    k = 10 ** 6
    hits = 0
    # draw root occupancies directly in bulk for speed: the root sample is
    # the first uniform of each configuration draw
    for _ in range(200):
        block = rng.random((k // 200, shape.n))
        hits += int((block[:, 0] < 0.5).sum())
    assert abs(hits / k - 0.5) <= 3e-3


def test_broadcast_sample_sibling_independence():
    # chi-squared independence of child subtree occupancy given root spin
    shape = TreeShape(2, 2)
    rng = make_rng(99)
    counts = {0: np.zeros((2, 2)), 1: np.zeros((2, 2))}
    for _ in range(20000):
        cfg = broadcast_sample(shape, 1.0, rng=rng)
        r = int(cfg.occ[0])
        counts[r][int(cfg.occ[1]), int(cfg.occ[2])] += 1
    for r in (0, 1):
        tab = counts[r]
        if r == 1:
            # children forced unoccupied; nothing to test
            assert tab[1].sum() == 0 and tab[:, 1].sum() == 0
            continue
        _, p, _, _ = chi2_contingency(tab)
        assert p > 0.001


@pytest.mark.parametrize("b,h,omega", [
    (2, 1, 1.0), (2, 2, 0.5), (2, 3, 1.0), (3, 2, 0.5), (2, 0, 0.7),
])
def test_broadcast_equivalence(b, h, omega):
    params = ModelParams.from_omega(b, omega)
    shape = TreeShape(b, h)
    tv = check_broadcast_equivalence(shape, params)
    assert tv <= 1e-10


def test_broadcast_log_prob_sums_to_one():
    shape = TreeShape(2, 2)
    params = ModelParams.from_omega(2, 0.5)
    space = enumerate_states(shape, WeightScheme.broadcast(params))
    total = np.exp(broadcast_log_prob(shape, params.omega, space.masks)).sum()
    assert abs(total - 1.0) <= 1e-12


def test_marginal_csv_shape():
    shape = TreeShape(2, 1)
    tab = subtree_marginals(shape, WeightScheme.uniform(1.0))
    lines = tab.to_csv().strip().split("\r\n")
    assert lines[0] == "vertex_id,depth,p_occ,p_occ_given_parent_free"
    assert len(lines) == 1 + shape.n
