import math

import numpy as np
import pytest

from hardtree.errors import DomainError, StructuralError
from hardtree.tree import (BoundaryCondition, Configuration, ModelParams,
                           TreeShape, count_independent_sets, is_independent,
                           omega_for_delta, solve_omega, tree_size,
                           uniqueness_threshold, validate)


def test_tree_size_closed_form():
    for b in (2, 3, 5, 16):
        for h in range(0, 5):
            assert tree_size(b, h) == sum(b ** d for d in range(h + 1))


def test_tree_size_bounds():
    with pytest.raises(DomainError):
        tree_size(1, 3)
    with pytest.raises(DomainError):
        tree_size(2, 61)
    with pytest.raises(DomainError):
        tree_size(2 ** 16 + 1, 1)


def test_navigation_roundtrip():
    for b, h in [(2, 4), (3, 3), (5, 2)]:
        shape = TreeShape(b, h)
        for v in range(1, shape.n):
            assert v in shape.children(shape.parent(v))
        # leaves are exactly the last b^h indices
        for v in range(shape.first_leaf, shape.n):
            assert len(shape.children(v)) == 0
        for v in range(shape.first_leaf):
            assert len(shape.children(v)) == b


def test_level_slices_partition():
    shape = TreeShape(3, 3)
    seen = []
    for d in range(shape.h + 1):
        sl = shape.level_slice(d)
        seen.extend(range(sl.start, sl.stop))
        assert all(shape.depth(v) == d for v in range(sl.start, sl.stop))
    assert seen == list(range(shape.n))


def test_solve_omega_exact_cases():
    # omega=1 at b=2: 1*(1+1)^2 = 4
    assert abs(solve_omega(4.0, 2) - 1.0) <= 1e-12
    # b=1: quadratic omega^2 + omega - 4 = 0
    root = (-1 + math.sqrt(17)) / 2
    assert abs(solve_omega(4.0, 1) - root) <= 1e-12
    # tiny lambda: omega -> lambda
    w = solve_omega(1e-9, 2)
    assert abs(w * (1 + w) ** 2 - 1e-9) <= 1e-12 * 1.0
    assert abs(w - 1e-9) <= 1e-11


def test_solve_omega_residual_contract():
    rng = np.random.default_rng(7)
    for _ in range(50):
        lam = float(10 ** rng.uniform(-6, 3))
        b = int(rng.integers(1, 65))
        w = solve_omega(lam, b)
        assert abs(w * (1 + w) ** b - lam) <= 1e-12 * max(1.0, lam)


def test_solve_omega_roundtrip_identity():
    # solve_omega inverts omega -> omega(1+omega)^b on (0, 10]
    rng = np.random.default_rng(11)
    for _ in range(100):
        w = float(10 ** rng.uniform(-6, 1))
        b = int(rng.integers(1, 65))
        lam = w * (1 + w) ** b
        assert abs(solve_omega(lam, b) - w) <= 1e-10 * max(1.0, w)


def test_solve_omega_domain():
    with pytest.raises(DomainError):
        solve_omega(0.0, 2)
    with pytest.raises(DomainError):
        solve_omega(-1.0, 2)


def test_omega_for_delta():
    assert abs(omega_for_delta(1.0, 2) - math.log(2)) <= 1e-15
    assert abs(omega_for_delta(0.0, 7) - math.log(7) / 7) <= 1e-15
    assert abs(omega_for_delta(-0.5, 4) - 0.5 * math.log(4) / 4) <= 1e-15
    with pytest.raises(DomainError):
        omega_for_delta(1.0, 1)
    with pytest.raises(DomainError):
        omega_for_delta(-1.0, 3)


def test_uniqueness_threshold_values():
    assert uniqueness_threshold(2) == 4.0
    assert uniqueness_threshold(3) == 27.0 / 16.0
    assert abs(uniqueness_threshold(4) - 256.0 / 243.0) <= 1e-15


def test_model_params_consistency():
    p = ModelParams.from_lambda(3, 2.5)
    assert abs(p.omega * (1 + p.omega) ** 3 - 2.5) <= 1e-10
    q = ModelParams.from_omega(2, 1.0)
    assert q.lam == 4.0
    r = ModelParams.from_delta(2, 1.0)
    assert abs(r.omega - math.log(2)) <= 1e-15
    with pytest.raises(DomainError):
        ModelParams(b=2, lam=5.0, omega=1.0)


def test_validate_basic():
    shape = TreeShape(2, 1)
    free = BoundaryCondition.free()
    empty = Configuration.empty(shape.n)
    assert validate(empty, shape, free)
    bad = Configuration(np.array([1, 1, 0], dtype=bool))
    assert not validate(bad, shape, free)
    bnd = BoundaryCondition.explicit([True, False])
    cfg = Configuration(np.array([0, 0, 0], dtype=bool))
    assert not validate(cfg, shape, bnd)
    ok = Configuration(np.array([0, 1, 0], dtype=bool))
    assert validate(ok, shape, bnd)


def test_validate_size_mismatch():
    shape = TreeShape(2, 1)
    with pytest.raises(StructuralError):
        validate(Configuration.empty(5), shape, BoundaryCondition.free())


def test_count_independent_sets_matches_bruteforce():
    for b, h in [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (4, 1)]:
        shape = TreeShape(b, h)
        if shape.n > 20:
            continue
        brute = 0
        for mask in range(1 << shape.n):
            occ = np.array([(mask >> v) & 1 for v in range(shape.n)], dtype=bool)
            if is_independent(occ, shape):
                brute += 1
        assert count_independent_sets(shape) == brute


def test_count_with_boundary():
    shape = TreeShape(2, 1)
    both = BoundaryCondition.explicit([True, True])
    assert count_independent_sets(shape, both) == 1
    none = BoundaryCondition.explicit([False, False])
    assert count_independent_sets(shape, none) == 2


def test_configuration_hex_roundtrip():
    rng = np.random.default_rng(3)
    for n in (1, 3, 4, 15, 31):
        bits = rng.random(n) < 0.4
        cfg = Configuration(bits)
        back = Configuration.from_hex(cfg.to_hex(), n)
        assert back == cfg
    # MSB of first digit is vertex 0
    cfg = Configuration(np.array([1, 0, 0], dtype=bool))
    assert cfg.to_hex() == "8"


def test_boundary_json_roundtrip():
    shape = TreeShape(2, 2)
    bnd = BoundaryCondition.explicit([True, False, False, True])
    s = bnd.to_json(shape)
    back, shape2 = BoundaryCondition.from_json(s)
    assert shape2 == shape
    assert back == bnd
    free = BoundaryCondition.free()
    back2, _ = BoundaryCondition.from_json(free.to_json(shape))
    assert back2.is_free()
