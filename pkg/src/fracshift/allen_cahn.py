"""Space-fractional Allen-Cahn flow on the periodic square (0, 2pi)^2.

Backward Euler in time with the cubic reaction frozen at the old step
turns every update into one shifted fractional solve. On a periodic
grid that solve is diagonal in Fourier space, so the resolvent sum
collapses to a per-mode scalar factor and each step costs two FFTs.
The same factors double as an exact oracle for the quadrature, since
the true symbol (lambda^alpha + b)^(-1) is available in closed form.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .quadrature import plan_from_tolerance


class FieldBlowupError(RuntimeError):
    """Field picked up a NaN or Inf during time stepping."""


class EnergyIncreaseError(RuntimeError):
    """Discrete free energy rose beyond the per-step tolerance."""


# relative slack on the per-step energy decrease; the linearized
# scheme is not provably monotone, only observed to be
ENERGY_SLACK = 1e-6


class PeriodicSpectralOperator:
    """Minus Laplacian on the periodic square, held as its symbol grid.

    Frequencies are integers, so the symbol is lambda_k = |k|^2 with
    lambda_0 = 0 and symmetry under k -> -k.
    """

    def __init__(self, n):
        if n < 2 or n % 2:
            raise ValueError(f"grid size must be even and >= 2, got {n}")
        self.n = n
        k = np.fft.fftfreq(n, d=1.0 / n)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        self.symbol = kx**2 + ky**2

    def fractional_symbol(self, alpha):
        return self.symbol**alpha


@dataclass
class PhaseFieldState:
    u: np.ndarray
    t: float = 0.0
    energy_history: list = field(default_factory=list)


def mode_factors(op, alpha, b, plan=None):
    """Per-mode multipliers approximating (lambda^alpha + b)^(-1).

    With a plan, each mode gets the resolvent quadrature sum; the zero
    mode is pinned to the exact value 1/b, which the untruncated sum
    reproduces through the identity sum(w) = 1/b. Without a plan the
    exact symbol is used directly (the alpha = 1 path, where the
    quadrature degenerates).
    """
    lam = op.symbol
    if plan is None:
        return 1.0 / (lam**alpha + b)
    if abs(plan.b - b) > 1e-9 * max(abs(b), 1.0):
        raise ValueError(f"plan built for b={plan.b}, flow has b={b}")
    flat = lam.ravel()
    fac = np.zeros_like(flat)
    for s, w in zip(plan.shifts, plan.weights):
        fac += w / (1.0 + s * flat)
    fac = fac.reshape(lam.shape)
    fac[lam == 0.0] = 1.0 / b
    return fac


def ac_step(state, op, alpha, eps, dt, plan, factors=None):
    """One linearized backward Euler step of the fractional flow.

    Solves (eps^2 (-Lap)^alpha + 1/dt) w = u/dt + u - u^3 mode-wise:
    the right side is transformed, scaled by 1/eps^2, multiplied by
    the per-mode factors for b = 1/(dt eps^2), and transformed back.
    """
    u = state.u
    if factors is None:
        factors = mode_factors(op, alpha, 1.0 / (dt * eps * eps), plan)
    g = (u / dt + u - u**3) / (eps * eps)
    w = np.fft.ifft2(factors * np.fft.fft2(g))
    u_next = w.real
    if not np.all(np.isfinite(u_next)):
        step = int(round(state.t / dt))
        raise FieldBlowupError(f"non-finite field after step {step + 1}")
    return PhaseFieldState(
        u=u_next, t=state.t + dt, energy_history=state.energy_history
    )


def energy(state, op, alpha, eps):
    """Discrete free energy: fractional Dirichlet part plus double well.

    The spectral term uses the Parseval weight (2pi)^2 / n^4 so that it
    equals (eps^2/2) int |A^(alpha/2) u|^2 on the grid; the double well
    F(u) = (1 - u^2)^2 / 4 is integrated by the midpoint rule.
    """
    n = op.n
    uh = np.fft.fft2(state.u)
    grad_part = (
        0.5 * eps * eps * (2.0 * np.pi) ** 2 / n**4
        * np.sum(op.fractional_symbol(alpha) * np.abs(uh) ** 2)
    )
    well = 0.25 * (1.0 - state.u**2) ** 2
    return float(grad_part + (2.0 * np.pi / n) ** 2 * well.sum())


def total_variation(u):
    """Grid total variation with periodic wrap, scaled by cell width."""
    h = 2.0 * np.pi / u.shape[0]
    return float(
        h * (np.abs(u - np.roll(u, 1, axis=0)).sum()
             + np.abs(u - np.roll(u, 1, axis=1)).sum())
    )


@dataclass(frozen=True)
class PhaseFieldConfig:
    alpha: float
    n: int = 128
    eps: float = 0.1
    dt: float = 1.0 / 128.0
    t_end: float = 50.0
    seed: int = 7
    tol: float = 1e-10
    snapshot_times: tuple = (0.0, 1.0, 10.0, 50.0)
    out_dir: str = ""
    snapshot_format: str = "csv"

    def __post_init__(self):
        if self.snapshot_format not in ("csv", "bin"):
            raise ValueError(
                f"snapshot format must be csv or bin, got {self.snapshot_format!r}"
            )
        if self.dt <= 0.0 or self.t_end < 0.0:
            raise ValueError("time step must be positive and t_end nonnegative")


@dataclass
class SimulationResult:
    config: PhaseFieldConfig
    state: PhaseFieldState
    snapshots: dict
    plan: object


def run_simulation(cfg):
    """Integrate the flow to t_end, collecting snapshots and energy.

    Initial data is seeded uniform noise in [-0.05, 0.05). The shift is
    b = 1/(dt eps^2); for alpha < 1 the per-mode factors come from a
    tolerance-driven plan, for alpha = 1 from the exact symbol. Energy
    is recorded every step and must not increase beyond ENERGY_SLACK
    relative; a violation aborts the run. With out_dir set, snapshots
    and the energy history are also written there.
    """
    op = PeriodicSpectralOperator(cfg.n)
    b = 1.0 / (cfg.dt * cfg.eps**2)
    if cfg.alpha == 1.0:
        plan = None
    else:
        plan = plan_from_tolerance(cfg.alpha, b, 0.0, cfg.tol)
    factors = mode_factors(op, cfg.alpha, b, plan)

    rng = np.random.default_rng(cfg.seed)
    u0 = 0.1 * rng.random((cfg.n, cfg.n)) - 0.05
    state = PhaseFieldState(u=u0, t=0.0)
    e_prev = energy(state, op, cfg.alpha, cfg.eps)
    state.energy_history.append((0.0, e_prev))

    n_steps = int(round(cfg.t_end / cfg.dt))
    snap_steps = {int(round(t / cfg.dt)): t for t in cfg.snapshot_times}
    snapshots = {}
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = u0.copy()

    for k in range(1, n_steps + 1):
        state = ac_step(state, op, cfg.alpha, cfg.eps, cfg.dt, plan, factors)
        e_next = energy(state, op, cfg.alpha, cfg.eps)
        if e_next > e_prev + ENERGY_SLACK * abs(e_prev):
            raise EnergyIncreaseError(
                f"energy rose at step {k}: {e_prev:.12g} -> {e_next:.12g}"
            )
        state.energy_history.append((k * cfg.dt, e_next))
        e_prev = e_next
        if k in snap_steps:
            snapshots[snap_steps[k]] = state.u.copy()

    result = SimulationResult(
        config=cfg, state=state, snapshots=snapshots, plan=plan
    )
    if cfg.out_dir:
        write_outputs(result)
    return result


def _metadata_line(cfg, t):
    return (
        f"n={cfg.n} t={t:g} alpha={cfg.alpha:g} "
        f"eps={cfg.eps:g} seed={cfg.seed}"
    )


def write_outputs(result):
    cfg = result.config
    os.makedirs(cfg.out_dir, exist_ok=True)
    for t, u in sorted(result.snapshots.items()):
        stem = os.path.join(cfg.out_dir, f"snapshot_t{t:g}")
        meta = _metadata_line(cfg, t)
        if cfg.snapshot_format == "bin":
            u.astype(np.float64).tofile(stem + ".bin")
            with open(stem + ".meta", "w", encoding="utf-8") as fh:
                fh.write(meta + "\n")
        else:
            np.savetxt(stem + ".csv", u, fmt="%.17g", delimiter=",",
                       header=meta)
    path = os.path.join(cfg.out_dir, "energy.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,t,energy\n")
        for k, (t, e) in enumerate(result.state.energy_history):
            fh.write(f"{k},{t:.17g},{e:.17g}\n")
