import numpy as np
import pytest

from dyknet import (
    AffineFunction,
    DimensionMismatchError,
    NonPositiveScaleError,
    OutsideConjugateDomainError,
    affine_objective,
    bundle_prox,
    conjugate_value,
    eval_objective,
    make_seeded_quadratic,
    prox,
    quadratic_objective,
    subgradient,
    tangent_minorant,
    zero_objective,
)
from helpers_oracle import bundle_minimize_oracle, grid_minimize, quad_objective_batch


def test_eval_examples():
    assert eval_objective(zero_objective(3), [1.0, -2.0, 4.0]) == 0.0
    q = quadratic_objective(v=[1.0], r=1.0, b=[0.0], c=0.0)
    assert eval_objective(q, [1.0]) == pytest.approx(1.0)
    a = affine_objective([2.0, 0.0], 3.0)
    assert eval_objective(a, [1.0, 5.0]) == pytest.approx(5.0)


def test_subgradient_examples():
    assert np.array_equal(subgradient(zero_objective(2), [3.0, 4.0]), [0.0, 0.0])
    q = quadratic_objective(v=[1.0], r=1.0, b=[1.0])
    assert subgradient(q, [2.0]) == pytest.approx([5.0])
    a = affine_objective([2.0, -1.0], 0.5)
    assert np.array_equal(subgradient(a, [9.0, 9.0]), [2.0, -1.0])


def test_prox_examples():
    x, z = prox(zero_objective(1), 1.0, [2.0])
    assert x == pytest.approx([2.0]) and z == pytest.approx([0.0])
    q = quadratic_objective(v=[0.0], r=1.0, b=[0.0])  # f = x^2/2
    x, z = prox(q, 1.0, [2.0])
    assert x == pytest.approx([1.0]) and z == pytest.approx([1.0])
    with pytest.raises(NonPositiveScaleError):
        prox(q, 0.0, [1.0])
    with pytest.raises(ValueError):
        quadratic_objective(v=[1.0], r=0.0, b=[0.0])  # ridge must be positive


def test_conjugate_examples():
    assert conjugate_value(zero_objective(1), [0.0]) == 0.0
    q = quadratic_objective(v=[0.0], r=1.0, b=[0.0])
    assert conjugate_value(q, [3.0]) == pytest.approx(4.5)
    a = affine_objective([1.0], 2.0)
    assert conjugate_value(a, [1.0]) == pytest.approx(-2.0)
    with pytest.raises(OutsideConjugateDomainError):
        conjugate_value(a, [1.1])
    with pytest.raises(OutsideConjugateDomainError):
        conjugate_value(zero_objective(1), [1e-6])
    # tolerance absorbs rounding-level drift
    assert conjugate_value(a, [1.0 + 1e-12]) == pytest.approx(-2.0)


def test_dimension_checks():
    q = quadratic_objective(v=[1.0, 0.0], r=0.5, b=[0.0, 0.0])
    with pytest.raises(DimensionMismatchError):
        eval_objective(q, [1.0])
    with pytest.raises(DimensionMismatchError):
        prox(q, 1.0, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionMismatchError):
        bundle_prox(AffineFunction([1.0], 0.0), AffineFunction([1.0, 2.0], 0.0), 1.0, [0.0])


def test_bundle_prox_examples():
    piece = AffineFunction([1.0], 0.0)
    x, z, f_new = bundle_prox(piece, AffineFunction([1.0], 0.0), 1.0, [0.0])
    assert x == pytest.approx([-1.0]) and z == pytest.approx([1.0])
    assert f_new.a == pytest.approx([1.0])

    x, z, f_new = bundle_prox(AffineFunction([1.0], 0.0), AffineFunction([-1.0], 0.0),
                              1.0, [0.0])
    assert x == pytest.approx([0.0]) and z == pytest.approx([0.0])
    assert f_new.a == pytest.approx([0.0]) and f_new.b == pytest.approx(0.0)

    x, z, _ = bundle_prox(AffineFunction([0.0], 0.0), AffineFunction([1.0], -10.0),
                          1.0, [0.0])
    assert x == pytest.approx([0.0]) and z == pytest.approx([0.0])


def test_bundle_prox_degenerate_parallel_pieces():
    # parallel pieces collapse to one affine piece with the larger offset
    x, z, f_new = bundle_prox(AffineFunction([2.0, 0.0], -1.0),
                              AffineFunction([2.0, 0.0], 3.0), 2.0, [0.0, 0.0])
    assert x == pytest.approx([-1.0, 0.0])
    assert z == pytest.approx([2.0, 0.0])
    # the new minorant reproduces the dominant piece exactly
    assert f_new.a == pytest.approx([2.0, 0.0])
    assert f_new.b == pytest.approx(3.0)


def test_bundle_prox_fixed_point_identity():
    # x must be the exact prox point of the returned minorant
    rng = np.random.default_rng(11)
    for _ in range(50):
        m = int(rng.integers(1, 4))
        f1 = AffineFunction(rng.normal(size=m), float(rng.normal()))
        f2 = AffineFunction(rng.normal(size=m), float(rng.normal()))
        s = float(rng.uniform(0.2, 3.0))
        center = rng.normal(size=m)
        x, z, f_new = bundle_prox(f1, f2, s, center)
        x2 = center - f_new.a / s
        assert np.max(np.abs(x2 - x)) < 1e-12


def _random_quadratic(rng, m, r_low=0.1):
    v = rng.normal(size=m)
    r = float(rng.uniform(r_low, 1.0))
    b = rng.normal(size=m)
    c = float(rng.normal())
    return quadratic_objective(v, r, b, c)


def test_minorant_property_after_bundle_steps():
    # chain bundle steps against a true quadratic: the model stays below f
    rng = np.random.default_rng(21)
    for _ in range(20):
        m = int(rng.integers(1, 4))
        f = _random_quadratic(rng, m)
        anchor = rng.normal(size=m)
        model = tangent_minorant(f, anchor)
        x_prev = anchor
        for _ in range(5):
            s = float(rng.uniform(0.3, 2.0))
            center = rng.normal(size=m)
            tangent = tangent_minorant(f, x_prev)
            x, z, model = bundle_prox(model, tangent, s, center)
            for _ in range(100):
                probe = rng.normal(size=m) * 3.0
                assert model(probe) <= eval_objective(f, probe) + 1e-9
            x_prev = x


def test_optimality_certificate_prox_and_bundle():
    # z = s*(center - x) must be a subgradient at x of the proxed objective
    rng = np.random.default_rng(33)
    for _ in range(40):
        m = int(rng.integers(1, 4))
        f = _random_quadratic(rng, m)
        s = float(rng.uniform(0.2, 3.0))
        center = rng.normal(size=m)
        x, z = prox(f, s, center)
        assert np.max(np.abs(z - s * (center - x))) < 1e-12
        for _ in range(20):
            yy = rng.normal(size=m) * 2.0
            assert eval_objective(f, yy) >= \
                eval_objective(f, x) + float(z @ (yy - x)) - 1e-9
        f1 = AffineFunction(rng.normal(size=m), float(rng.normal()))
        f2 = AffineFunction(rng.normal(size=m), float(rng.normal()))
        x, z, _ = bundle_prox(f1, f2, s, center)
        gx = max(f1(x), f2(x))
        for _ in range(20):
            yy = rng.normal(size=m) * 2.0
            assert max(f1(yy), f2(yy)) >= gx + float(z @ (yy - x)) - 1e-9


def test_prox_matches_grid_oracle():
    rng = np.random.default_rng(101)
    for case in range(100):
        m = 1 + case % 2
        f = _random_quadratic(rng, m)
        s = float(rng.uniform(0.2, 3.0))
        center = rng.normal(size=m) * 2.0
        x, _ = prox(f, s, center)
        batch = quad_objective_batch(f.fn.v, f.fn.r, f.fn.b, f.fn.c, s, center)
        g0 = subgradient(f, center)
        radius = float(np.linalg.norm(g0)) / s * 1.5 + 1.0
        x_oracle = grid_minimize(batch, center, radius)
        assert np.max(np.abs(x - x_oracle)) < 1e-6


def test_bundle_prox_matches_grid_oracle():
    rng = np.random.default_rng(202)
    for case in range(100):
        m = 1 + case % 2
        a1 = rng.normal(size=m)
        a2 = rng.normal(size=m)
        b1 = float(rng.normal())
        b2 = float(rng.normal())
        s = float(rng.uniform(0.2, 3.0))
        center = rng.normal(size=m) * 2.0
        x, _, _ = bundle_prox(AffineFunction(a1, b1), AffineFunction(a2, b2), s, center)
        x_oracle = bundle_minimize_oracle(a1, b1, a2, b2, s, center)
        assert np.max(np.abs(x - x_oracle)) < 1e-6


def _dual_estimate_gap(f, piece, s, xbar, v_star):
    """Gap between the dual value of an affine under-estimator and the true
    optimal value of min f + (s/2)||. - xbar||^2."""
    z = piece.a
    dual = piece.b + 0.5 * s * float(xbar @ xbar) - \
        0.5 * s * float((z / s - xbar) @ (z / s - xbar))
    return v_star - dual


def test_two_step_gap_ratio_bound():
    # dual-gap contraction of one minorant refresh on smooth problems
    rng = np.random.default_rng(303)
    for _ in range(100):
        m = int(rng.integers(1, 4))
        f = _random_quadratic(rng, m)
        s = float(rng.uniform(0.3, 2.0))
        xbar = rng.normal(size=m)
        hess = f.fn.hessian()
        x_opt = np.linalg.solve(hess + s * np.eye(m), s * xbar - f.fn.b)
        v_star = eval_objective(f, x_opt) + 0.5 * s * float((x_opt - xbar) @ (x_opt - xbar))
        lip = f.fn.gradient_lipschitz

        first = tangent_minorant(f, rng.normal(size=m) * 1.5)
        alpha1 = _dual_estimate_gap(f, first, s, xbar, v_star)
        if alpha1 < 1e-10:
            continue
        x1 = xbar - first.a / s
        tangent = tangent_minorant(f, x1)
        _, _, second = bundle_prox(first, tangent, s, xbar)
        alpha2 = _dual_estimate_gap(f, second, s, xbar, v_star)
        assert alpha1 >= -1e-10 and alpha2 >= -1e-10
        ratio = alpha2 / alpha1
        assert (1.0 / (4.0 * (lip / s + 1.0))) * ratio ** 2 + ratio <= 1.0 + 1e-8


def test_make_seeded_quadratic_properties():
    rng = np.random.default_rng(4)
    target = rng.normal(size=6)
    q = make_seeded_quadratic(6, target, np.random.default_rng(9))
    ones = np.ones(6)
    grad = q.hessian() @ ones + q.b
    assert np.max(np.abs(grad - target)) < 1e-12
    assert 0.0 < q.r < 1.0
    assert np.all(np.linalg.eigvalsh(q.hessian()) > 0)
    assert q.c == 0.0
    # if the target already equals A @ ones, b collapses to zero
    q2 = make_seeded_quadratic(6, q.hessian() @ ones, np.random.default_rng(9))
    assert np.max(np.abs(q2.b)) < 1e-12
