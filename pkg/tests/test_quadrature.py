"""Plan construction, the shifted-resolvent sum, and the index estimate."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from fracshift.fem import assemble, build_mesh, load_vector, preset, source
from fracshift.oracle import DenseOperator, eigen_fractional_apply
from fracshift.quadrature import (
    NotAccretiveError,
    OperatorPencil,
    PlanError,
    ToleranceUnreachableError,
    apply_inverse,
    error_bound,
    estimate_beta,
    plan_explicit,
    plan_from_tolerance,
    pole_constants,
)
from fracshift.sparse import SparseComplex, SparseError


def _scalar_pencil(lam):
    return OperatorPencil(
        mass=SparseComplex(sp.csr_matrix(np.array([[1.0]]))),
        stiff=SparseComplex(sp.csr_matrix(np.array([[lam]]))),
    )


def _fd_matrix(n):
    return (np.diag(np.full(n, 2.0))
            - np.diag(np.ones(n - 1), 1)
            - np.diag(np.ones(n - 1), -1))


def test_pole_constants():
    k1, k2 = pole_constants(0.5, 0.0)
    assert k1 == k2 == pytest.approx(math.pi / 2.0, rel=1e-15)

    k1, k2 = pole_constants(0.6, 0.0)
    assert k1 == pytest.approx(0.6 * math.pi, rel=1e-15)
    assert k2 == pytest.approx(0.4 * math.pi, rel=1e-15)
    assert k2 < k1

    # near the crossing: both distances agree to about a percent
    k1, k2 = pole_constants(0.6, 1.778)
    assert k1 == pytest.approx(1.2498, abs=5e-4)
    assert abs(k1 - k2) / k2 < 0.01


def test_pole_constants_rejects_bad_arguments():
    for alpha in (0.0, 1.0, -0.2, 1.3):
        with pytest.raises(PlanError):
            pole_constants(alpha, 0.0)
    with pytest.raises(PlanError):
        pole_constants(0.5, -1.0)


def test_plan_node_values():
    plan = plan_explicit(0.5, 1.0, 0.0, 0.5, 4, 4)
    center = list(plan.ns).index(0)
    # cos(pi/2) = 0 collapses the center denominator to 2
    assert plan.weights[center] == pytest.approx(0.5 / math.pi, rel=1e-14)
    assert plan.shifts[center + 3] == pytest.approx(math.exp(-3.0), rel=1e-14)

    for alpha in (0.3, 0.7):
        p0 = plan_explicit(alpha, 0.0, 0.0, 0.25, 2, 2)
        c = list(p0.ns).index(0)
        assert p0.weights[c] == pytest.approx(
            0.25 * math.sin(math.pi * alpha) / (alpha * math.pi), rel=1e-14)


def test_plan_invariants():
    rng = np.random.default_rng(31)
    for _ in range(25):
        alpha = float(rng.uniform(0.05, 0.95))
        b = float(rng.choice([0.0, rng.uniform(0.0, 1e4)]))
        plan = plan_explicit(alpha, b, float(rng.uniform(0.0, 3.0)),
                             float(rng.uniform(0.05, 1.0)),
                             int(rng.integers(0, 40)), int(rng.integers(0, 40)))
        assert plan.n_nodes == plan.m_neg + plan.n_pos + 1
        assert plan.ns[0] == -plan.m_neg and plan.ns[-1] == plan.n_pos
        assert np.all(plan.weights > 0.0) and np.all(np.isfinite(plan.weights))
        assert plan.kappa1 == pytest.approx(
            plan.alpha * (math.pi - math.atan(plan.beta)), rel=1e-15)
        assert plan.kappa2 == pytest.approx(
            (1.0 - plan.alpha) * math.pi, rel=1e-15)


def test_plan_explicit_rejects_bad_arguments():
    with pytest.raises(PlanError):
        plan_explicit(0.5, 1.0, 0.0, 0.0, 5, 5)
    with pytest.raises(PlanError):
        plan_explicit(0.5, 1.0, 0.0, -0.1, 5, 5)
    with pytest.raises(PlanError):
        plan_explicit(0.5, -1.0, 0.0, 0.5, 5, 5)
    with pytest.raises(PlanError):
        plan_explicit(0.5, 1.0, 0.0, 0.5, -1, 5)


def test_planner_reference_triples():
    plan = plan_from_tolerance(0.6, 12800.0, 0.0, 1e-10)
    assert (plan.tau, plan.m_neg, plan.n_pos) == (0.5, 5, 51)
    plan = plan_from_tolerance(0.8, 12800.0, 0.0, 1e-10)
    assert (plan.tau, plan.m_neg, plan.n_pos) == (0.25, 12, 101)


def test_planner_balance_at_unit_shift():
    # ln b = 0: N = ceil(2 pi kappa / tau^2), M = ceil(alpha/(alpha+1) * that)
    for alpha in (0.3, 0.55, 0.8):
        plan = plan_from_tolerance(alpha, 1.0, 0.0, 1e-8)
        raw = 2.0 * math.pi * min(plan.kappa1, plan.kappa2) / plan.tau**2
        assert plan.n_pos == math.ceil(raw)
        assert plan.m_neg == math.ceil(alpha / (alpha + 1.0) * raw)


def test_planner_unreachable_tolerance():
    with pytest.raises(ToleranceUnreachableError) as info:
        plan_from_tolerance(0.5, 1.0, 0.0, 1e-300)
    assert info.value.best > 0.0


def test_planner_rejects_nonpositive_shift():
    with pytest.raises(PlanError):
        plan_from_tolerance(0.5, 0.0, 0.0, 1e-8)


def test_scalar_apply_unit_eigenvalue():
    pen = _scalar_pencil(1.0)
    f = np.array([1.0])
    for alpha in (0.3, 0.5, 0.7):
        for b in (1.0, 10.0):
            plan = plan_explicit(alpha, b, 0.0, 0.15, 200, 200)
            u = apply_inverse(pen, plan, f)
            assert abs(u[0] - 1.0 / (1.0 + b)) <= 1e-10


def test_scalar_apply_square_root():
    plan = plan_explicit(0.5, 0.0, 0.0, 0.15, 200, 200)
    u = apply_inverse(_scalar_pencil(4.0), plan, np.array([1.0]))
    assert abs(u[0] - 0.5) <= 1e-8


def test_zero_operator_identity():
    pen = OperatorPencil(mass=SparseComplex.identity(3),
                         stiff=SparseComplex(sp.csr_matrix((3, 3))))
    f = np.array([1.0, -2.0, 0.5])
    for b in (1.0, 10.0):
        for alpha in (0.3, 0.5, 0.7):
            plan = plan_explicit(alpha, b, 0.0, 0.1, 400, 400)
            assert abs(plan.weights.sum() - 1.0 / b) <= 1e-8
            u = apply_inverse(pen, plan, f)
            assert np.allclose(u, plan.weights.sum() * f, rtol=1e-14)


def test_apply_linearity():
    op = assemble(build_mesh(8), preset("a2"))
    plan = plan_explicit(0.5, 1.0, 0.0, 0.3, 60, 60)
    rng = np.random.default_rng(32)
    f = rng.standard_normal(49) + 1j * rng.standard_normal(49)
    g = rng.standard_normal(49) + 1j * rng.standard_normal(49)
    c1, c2 = 1.7, -0.4 + 2.1j
    lhs = apply_inverse(op, plan, c1 * f + c2 * g).values
    rhs = (c1 * apply_inverse(op, plan, f).values
           + c2 * apply_inverse(op, plan, g).values)
    assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) <= 1e-12


def test_apply_realness():
    op = assemble(build_mesh(8), preset("a1"))
    plan = plan_explicit(0.5, 1.0, 0.0, 0.3, 60, 60)
    u = apply_inverse(op, plan, load_vector(op.mesh, source("f1").fn))
    vals = np.asarray(u.values)
    assert np.linalg.norm(vals.imag) <= 1e-12 * np.linalg.norm(vals.real)


def test_apply_matches_eigen_oracle_on_difference_matrix():
    n = 50
    a = _fd_matrix(n)
    pen = OperatorPencil(mass=SparseComplex.identity(n),
                         stiff=SparseComplex(sp.csr_matrix(a)))
    j = np.arange(1, n + 1)
    f = np.sin(math.pi * j / (n + 1.0))
    plan = plan_explicit(0.5, 1.0, 0.0, 0.15, 200, 200)
    u = apply_inverse(pen, plan, f)
    ref = eigen_fractional_apply(DenseOperator(a), 0.5, 1.0, f)
    assert np.linalg.norm(u - ref) / np.linalg.norm(ref) <= 1e-8


def test_apply_rejects_wrong_length():
    from fracshift.sparse import ArgumentError

    plan = plan_explicit(0.5, 1.0, 0.0, 0.5, 2, 2)
    with pytest.raises(ArgumentError):
        apply_inverse(_scalar_pencil(1.0), plan, np.ones(2))


def test_failed_node_is_identified():
    # stiffness tuned so the n=2 shifted matrix cancels to zero
    alpha, tau = 0.5, 0.5
    s2 = math.exp(-2.0 * tau / alpha)
    pen = _scalar_pencil(-1.0 / s2)
    plan = plan_explicit(alpha, 1.0, 0.0, tau, 3, 3)
    with pytest.raises(SparseError, match="node n=2"):
        apply_inverse(pen, plan, np.array([1.0]))


def test_estimate_beta_hermitian_cases():
    est = estimate_beta(assemble(build_mesh(16), preset("a1")))
    assert est.beta <= 1e-10
    assert est.c0_floor > 0.0
    assert est.beta == pytest.approx(math.tan(est.theta), abs=1e-15)

    rng = np.random.default_rng(33)
    b = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
    herm = b @ b.conj().T + 30.0 * np.eye(30)
    pen = OperatorPencil(mass=SparseComplex.identity(30),
                         stiff=SparseComplex(sp.csr_matrix(herm)))
    assert estimate_beta(pen).beta <= 1e-10


def test_estimate_beta_rejects_non_accretive():
    pen = OperatorPencil(mass=SparseComplex.identity(4),
                         stiff=SparseComplex(sp.csr_matrix(-np.eye(4))))
    with pytest.raises(NotAccretiveError):
        estimate_beta(pen)


def test_error_bound_values():
    plan = plan_explicit(0.5, 2.0, 0.0, 1.0, 0, 0)
    step, tail_pos, tail_neg = error_bound(plan)
    assert step == pytest.approx(math.exp(-math.pi**2) / 2.0, rel=1e-13)
    assert tail_pos == 1.0
    assert tail_neg == pytest.approx(0.25, rel=1e-15)


def test_error_bound_step_halving():
    a = error_bound(plan_explicit(0.4, 3.0, 0.0, 0.5, 10, 10))[0]
    b = error_bound(plan_explicit(0.4, 3.0, 0.0, 0.25, 10, 10))[0]
    assert b * 3.0 == pytest.approx((a * 3.0) ** 2, rel=1e-12)


def test_error_bound_balanced_plan_terms_comparable():
    plan = plan_from_tolerance(0.6, 12800.0, 0.0, 1e-10)
    terms = error_bound(plan)
    assert max(terms) / min(terms) <= 100.0


def test_error_bound_degenerate_shift():
    step, tail_pos, tail_neg = error_bound(plan_explicit(0.5, 0.0, 0.0, 0.5, 5, 5))
    assert math.isinf(step) and math.isinf(tail_neg)
    assert tail_pos == pytest.approx(math.exp(-2.5), rel=1e-15)


def test_fastest_decay_alpha_per_operator():
    grid = [0.1 * k for k in range(1, 10)]

    def argmax_alpha(beta):
        rates = [min(pole_constants(a, beta)) for a in grid]
        return grid[int(np.argmax(rates))]

    assert argmax_alpha(0.0) == pytest.approx(0.5)
    assert argmax_alpha(1.778) == pytest.approx(0.6)
