"""Shifted-resolvent trapezoid quadrature for (A^alpha + b I)^{-1}.

The solve is realized as a weighted sum of sparse resolvent solves

    U = sum_{n=-M}^{N} w_n (M_h + s_n K_h)^{-1} f,
    s_n = exp(-n tau / alpha),
    w_n = tau sin(pi alpha) / (alpha pi)
          / (e^{n tau} + 2 b cos(pi alpha) + b^2 e^{-n tau}),

which converges at rate exp(-2 pi min(kappa_1, kappa_2)/tau) in the step
size, with kappa_1 = alpha (pi - arctan beta) set by the sector angle of
the operator and kappa_2 = (1 - alpha) pi by the branch point of z^alpha.
Balanced truncation picks M and N so that all three error sources decay
together, giving root-exponential cost in the solve count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as _spla

from .fem import DiscreteOperator, GridFunction
from .sparse import (
    ArgumentError,
    SparseComplex,
    SparseError,
    factorize,
    shift_combine,
)


class PlanError(ArgumentError):
    """Invalid quadrature parameters."""


class ToleranceUnreachableError(PlanError):
    """No step size on the search grid meets the requested tolerance."""

    def __init__(self, tol, best):
        self.tol = tol
        self.best = best
        super().__init__(
            f"no plan on the tau grid reaches tolerance {tol:g}; "
            f"best achievable bound is {best:g}"
        )


class NotAccretiveError(ArgumentError):
    """The Hermitian part of the stiffness matrix is not positive."""


@dataclass(frozen=True)
class OperatorPencil:
    """Any (mass, stiff) pair the quadrature can act on."""

    mass: SparseComplex
    stiff: SparseComplex


@dataclass(frozen=True)
class SpectralIndexEstimate:
    """Operator index beta, its angle, and the ellipticity floor."""

    beta: float
    theta: float
    c0_floor: float


@dataclass(frozen=True, eq=False)
class QuadraturePlan:
    """Node shifts and weights of one truncated trapezoid rule."""

    alpha: float
    b: float
    beta: float
    tau: float
    m_neg: int
    n_pos: int
    kappa1: float
    kappa2: float
    ns: np.ndarray = field(repr=False)
    shifts: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def n_nodes(self):
        return self.m_neg + self.n_pos + 1


def pole_constants(alpha, beta=0.0):
    """Decay constants (kappa1, kappa2) of the transformed integrand."""
    if not 0.0 < alpha < 1.0:
        raise PlanError(f"alpha must lie in (0, 1), got {alpha}")
    if beta < 0.0:
        raise PlanError(f"beta must be nonnegative, got {beta}")
    kappa1 = alpha * (math.pi - math.atan(beta))
    kappa2 = (1.0 - alpha) * math.pi
    return kappa1, kappa2


def plan_explicit(alpha, b, beta, tau, big_m, big_n):
    """Build the rule with given step and truncation indices."""
    kappa1, kappa2 = pole_constants(alpha, beta)
    if b < 0.0:
        raise PlanError(f"b must be nonnegative, got {b}")
    if tau <= 0.0:
        raise PlanError(f"tau must be positive, got {tau}")
    big_m = int(big_m)
    big_n = int(big_n)
    if big_m < 0 or big_n < 0:
        raise PlanError("truncation indices must be nonnegative")
    ns = np.arange(-big_m, big_n + 1)
    shifts = np.exp(-ns * tau / alpha)
    den = (
        np.exp(ns * tau)
        + 2.0 * b * math.cos(math.pi * alpha)
        + b * b * np.exp(-ns * tau)
    )
    weights = tau * math.sin(math.pi * alpha) / (alpha * math.pi) / den
    return QuadraturePlan(
        alpha=alpha,
        b=b,
        beta=beta,
        tau=tau,
        m_neg=big_m,
        n_pos=big_n,
        kappa1=kappa1,
        kappa2=kappa2,
        ns=ns,
        shifts=shifts,
        weights=weights,
    )


def _c_tau(alpha, kappa1, kappa2, tau):
    """Step-size factor of the quadrature error bound, constants set to 1."""
    if kappa1 > kappa2:
        arg = (kappa1 - kappa2) / alpha + (1.0 - alpha) / alpha * tau
        return 1.0 / math.sin(min(arg, 0.5 * math.pi)) * (1.0 + abs(math.log(tau)))
    arg = min(tau, 0.5 * math.pi)
    return 1.0 / math.sin(arg) * (1.0 + abs(math.log(kappa2 - kappa1 + alpha * tau)))


def _balanced_counts(alpha, b, kappa_min, tau):
    """Truncation indices balancing the three error sources."""
    lnb = math.log(b)
    n_real = 2.0 * math.pi * kappa_min / tau**2 + lnb / tau
    m_real = max(
        alpha / (alpha + 1.0) * (2.0 * math.pi * kappa_min / tau**2 - lnb / tau),
        0.0,
    )
    return max(math.ceil(m_real), 0), max(math.ceil(n_real), 0)


def tolerance_bound(alpha, b, beta, tau):
    """Error model for the balanced plan at step tau.

    Returns (bound, big_m, big_n) with
    bound = C(tau)/b * exp(-sqrt(pi min(kappa) [(1 + 1/alpha) M + N])).
    """
    kappa1, kappa2 = pole_constants(alpha, beta)
    if b <= 0.0:
        raise PlanError("tolerance planning requires b > 0")
    kmin = min(kappa1, kappa2)
    big_m, big_n = _balanced_counts(alpha, b, kmin, tau)
    work = (1.0 + 1.0 / alpha) * big_m + big_n
    bound = _c_tau(alpha, kappa1, kappa2, tau) / b * math.exp(
        -math.sqrt(math.pi * kmin * work)
    )
    return bound, big_m, big_n


_TAU_GRID = tuple(
    sorted(
        {2.0**-k for k in range(7)} | {3.0 * 2.0 ** -(k + 2) for k in range(7)},
        reverse=True,
    )
)
_TAU_GRID = tuple(t for t in _TAU_GRID if t >= 1.0 / 64.0)


def plan_from_tolerance(alpha, b, beta, tol):
    """Largest step on the dyadic/half-dyadic ladder meeting the tolerance."""
    if tol <= 0.0:
        raise PlanError("tolerance must be positive")
    best = math.inf
    for tau in _TAU_GRID:
        bound, big_m, big_n = tolerance_bound(alpha, b, beta, tau)
        if bound < tol:
            return plan_explicit(alpha, b, beta, tau, big_m, big_n)
        best = min(best, bound)
    raise ToleranceUnreachableError(tol, best)


def error_bound(plan):
    """The three decay factors of the total error, constants dropped.

    Returns (step_term, tail_pos, tail_neg):
        exp(-2 pi min(kappa)/tau) / b,
        exp(-N tau),
        b^{-2} exp(-(1 + 1/alpha) M tau).
    """
    kmin = min(plan.kappa1, plan.kappa2)
    step = math.exp(-2.0 * math.pi * kmin / plan.tau)
    tail_pos = math.exp(-plan.n_pos * plan.tau)
    tail_neg = math.exp(-(1.0 + 1.0 / plan.alpha) * plan.m_neg * plan.tau)
    if plan.b > 0.0:
        step /= plan.b
        tail_neg /= plan.b**2
    else:
        step = math.inf
        tail_neg = math.inf
    return step, tail_pos, tail_neg


def _solve_node(op, shift, load, node=None):
    try:
        mat = shift_combine(op.mass, op.stiff, shift)
        return factorize(mat).solve(load)
    except SparseError as exc:
        if node is None:
            raise
        raise type(exc)(f"shifted solve failed at node n={node}: {exc}") from exc


def apply_inverse(op, plan, load, threads=1):
    """Evaluate U = sum_n w_n (M + s_n K)^{-1} load.

    Nodes are independent solves; with threads > 1 they are mapped over a
    thread pool. The weighted sum always runs in fixed node order, so the
    result does not depend on the thread count.
    """
    if isinstance(op, DiscreteOperator):
        vec = np.asarray(load.values if isinstance(load, GridFunction) else load)
    else:
        vec = np.asarray(load)
    if vec.shape[0] != op.mass.n:
        raise ArgumentError(
            f"load has length {vec.shape[0]}, operator has {op.mass.n} dofs"
        )
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sols = list(
                pool.map(lambda ns: _solve_node(op, ns[1], vec, node=ns[0]),
                         zip(plan.ns, plan.shifts))
            )
    else:
        sols = [_solve_node(op, s, vec, node=n)
                for n, s in zip(plan.ns, plan.shifts)]
    acc = np.zeros(vec.shape[0], dtype=np.result_type(*[s.dtype for s in sols]))
    for w, x in zip(plan.weights, sols):
        acc += w * x
    if isinstance(op, DiscreteOperator):
        return GridFunction(op.mesh, acc)
    return acc


def node_sweep(op, shifts, loads):
    """Yield (index, solutions) for each shift against stacked loads.

    loads has shape (n, k). Used by the experiment runners to reuse the
    factorizations across several right-hand sides and, since the shifts
    do not depend on b, across every b value of a sweep.
    """
    loads = np.asarray(loads)
    for i, s in enumerate(shifts):
        mat = shift_combine(op.mass, op.stiff, s)
        lu = factorize(mat)
        yield i, lu.solve(loads)


def estimate_beta(op, tol=0.0, maxiter=None):
    """Discrete operator index from the stiffness pencil.

    beta = sup |Im(v* K v)| / Re(v* K v) over complex v, computed as the
    extreme eigenvalue of K_im v = lambda K_re v with K_re, K_im the
    Hermitian and skew parts. Also reports theta = arctan(beta) and the
    smallest eigenvalue of the pencil (K_re, mass).
    """
    k = op.stiff.csr.astype(np.complex128)
    kh = k.conjugate().transpose().tocsr()
    k_re = 0.5 * (k + kh)
    k_im = (k - kh) * (-0.5j)
    mass = op.mass.csr.astype(np.complex128)
    n = k.shape[0]
    v0 = np.ones(n)
    skew_scale = 0.0 if k_im.nnz == 0 else float(np.abs(k_im.data).max())

    if n <= 400:
        import scipy.linalg as _la

        kre_d = k_re.toarray()
        floor = float(
            _la.eigh(kre_d, mass.toarray(), eigvals_only=True, subset_by_index=[0, 0])[0]
        )
        if floor <= 0.0:
            raise NotAccretiveError(
                f"Hermitian part has pencil eigenvalue {floor:g} <= 0"
            )
        vals = _la.eigh(k_im.toarray(), kre_d, eigvals_only=True)
        beta = float(max(abs(vals[0]), abs(vals[-1])))
    else:
        floor = float(
            _spla.eigsh(
                k_re, k=1, M=mass, sigma=0, which="LM", v0=v0, tol=tol,
                maxiter=maxiter, return_eigenvectors=False,
            )[0].real
        )
        if floor <= 0.0:
            raise NotAccretiveError(
                f"Hermitian part has pencil eigenvalue {floor:g} <= 0"
            )
        if skew_scale == 0.0:
            beta = 0.0
        else:
            hi = _spla.eigsh(
                k_im, k=1, M=k_re, which="LA", v0=v0, tol=tol, maxiter=maxiter,
                return_eigenvectors=False,
            )[0].real
            lo = _spla.eigsh(
                k_im, k=1, M=k_re, which="SA", v0=v0, tol=tol, maxiter=maxiter,
                return_eigenvectors=False,
            )[0].real
            beta = float(max(abs(hi), abs(lo)))
    if beta < 1e-14:
        beta = 0.0
    return SpectralIndexEstimate(beta=beta, theta=math.atan(beta), c0_floor=floor)
