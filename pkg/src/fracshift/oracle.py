"""Dense reference routes for (B^alpha + t I)^{-1} f.

Two independent oracles cross-check the sparse quadrature engine: a
spectral route through the eigendecomposition, and direct adaptive
trapezoid evaluation of the resolvent integral

    (B^alpha + t)^{-1} = sin(pi alpha)/pi *
        int_0^inf (rho + B)^{-1} rho^alpha
        / (rho^{2 alpha} + 2 t cos(pi alpha) rho^alpha + t^2) d rho,

substituted with rho = e^s onto the whole real line. Keep n small; every
node of the integral route is a dense solve.
"""

import numpy as np

from .sparse import ArgumentError


class OracleError(Exception):
    pass


class IllConditionedEigenbasisError(OracleError):
    """Eigenvector basis too ill conditioned to trust; use the integral route."""


class SpectrumError(OracleError):
    """Eigenvalues found outside the right half plane."""


class OracleConvergenceError(OracleError):
    """Adaptive refinement exhausted without meeting the tolerance."""


class DenseOperator:
    """Dense matrix wrapper for the reference routes, n capped at 500."""

    def __init__(self, matrix):
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ArgumentError(f"matrix must be square, got shape {m.shape}")
        if m.shape[0] > 500:
            raise ArgumentError(
                f"dense oracle limited to n <= 500, got {m.shape[0]}"
            )
        self.matrix = m.astype(np.complex128)

    @property
    def n(self):
        return self.matrix.shape[0]


_COND_LIMIT = 1e8


def eigen_fractional_apply(op, alpha, t, f):
    """Spectral evaluation of (B^alpha + t)^{-1} f, principal branch.

    Requires a well conditioned eigenbasis; defective or nearly
    defective matrices are rejected with a pointer to the integral
    route.
    """
    if not 0.0 < alpha < 1.0:
        raise ArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    if t < 0.0:
        raise ArgumentError(f"t must be nonnegative, got {t}")
    f = np.asarray(f, dtype=np.complex128)
    lam, vecs = np.linalg.eig(op.matrix)
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise IllConditionedEigenbasisError(
            f"eigenvector condition {cond:.2e} exceeds {_COND_LIMIT:.0e}; "
            "use adaptive_integral_apply instead"
        )
    bad = lam[(lam.real <= 0.0) & (np.abs(lam) > 1e-14 * np.abs(lam).max())]
    if bad.size:
        raise SpectrumError(
            f"eigenvalue {bad[0]:.3e} is not in the open right half plane"
        )
    y = np.linalg.solve(vecs, f)
    y = y / (np.power(lam, alpha) + t)
    return vecs @ y


def _integrand_batch(mat, fvec, svals, alpha, t):
    """Stacked solves of the substituted integrand at the nodes svals."""
    k = svals.size
    n = mat.shape[0]
    shifted = np.broadcast_to(mat, (k, n, n)).copy()
    es = np.exp(svals)
    shifted[:, np.arange(n), np.arange(n)] += es[:, None]
    sols = np.linalg.solve(shifted, np.broadcast_to(fvec, (k, n))[..., None])[..., 0]
    esa = np.exp(svals * alpha)
    den = esa * esa + 2.0 * t * np.cos(np.pi * alpha) * esa + t * t
    return sols * (es * esa / den)[:, None]


def adaptive_integral_apply(op, alpha, t, f, tol=1e-10, max_rounds=14):
    """Trapezoid evaluation of the resolvent integral on the real line.

    Panel counts double and the window widens each round until two
    successive answers agree to tol in relative l2.
    """
    if not 0.0 < alpha < 1.0:
        raise ArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    if t < 0.0:
        raise ArgumentError(f"t must be nonnegative, got {t}")
    fvec = np.asarray(f, dtype=np.complex128)
    mat = op.matrix
    half = min(max(30.0, 30.0 / min(alpha, 1.0 - alpha)), 200.0)
    step = 1.0
    prefac = np.sin(np.pi * alpha) / np.pi
    batch = max(8, (1 << 22) // (mat.shape[0] * mat.shape[0]))

    prev = None
    diffs = []
    for _ in range(max_rounds):
        grid = np.arange(-half, half + 0.5 * step, step)
        total = np.zeros(mat.shape[0], dtype=np.complex128)
        for lo in range(0, grid.size, batch):
            chunk = grid[lo : lo + batch]
            total += _integrand_batch(mat, fvec, chunk, alpha, t).sum(axis=0)
        cur = prefac * step * total
        if prev is not None:
            denom = np.linalg.norm(cur)
            diff = np.linalg.norm(cur - prev) / (denom if denom > 0.0 else 1.0)
            diffs.append(diff)
            if diff < tol:
                return cur
        prev = cur
        step *= 0.5
        half += 15.0
    raise OracleConvergenceError(
        f"no convergence to {tol:g} after {max_rounds} rounds; "
        f"last differences {diffs[-2:]}"
    )
