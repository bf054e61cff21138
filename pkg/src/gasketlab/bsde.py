"""Backward-SDE solvers on the level-m chain.

Conditional expectations are exact finite sums over the <=4 neighbors, so the
only error sources are the time discretization and (for the MC route) path
sampling. The control variable is extracted as the covariation ratio

    Z_k(x) = E[Y_{k+1} dW | x] / dqv(x),

the discrete transcription of the martingale representation against the
walk's clock.

Drivers are Markovian: g(t, x, y) and f(t, x, y, z) receive the vertex-index
array and vectorized y, z arrays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .errors import DeclaredConstantError, SchemeError, UsageError
from .walk import PathEnsemble, StepKernel


@dataclass(frozen=True)
class BetaWeights:
    b0: float
    b1: float

    def __post_init__(self):
        if self.b0 < 1 or self.b1 < 1:
            raise UsageError("beta weights must both be >= 1")


def contraction_constant(k0: float, k1: float, w: BetaWeights) -> float:
    """K_beta = sqrt(K0^2/beta0 + K1^2/beta1)."""
    return math.sqrt(k0 * k0 / w.b0 + k1 * k1 / w.b1)


@dataclass
class BsdeProblem:
    """Driver pair, terminal data and duration for the chain BSDE.

    duration 'deterministic' runs on the reflected chain to horizon T;
    'killed' runs to T ^ sigma_V0 with boundary rows pinned to phi(t).
    terminal_psi: value array over vertices (or callable graph -> array).
    boundary_phi: callable t -> (3,) values at (p1, p2, p3).
    """

    g: callable
    f: callable
    terminal_psi: object
    horizon: float
    k0: float = 0.0
    k1: float = 0.0
    duration: str = "deterministic"
    boundary_phi: object = None
    kappa0: float | None = None
    kappa1: float | None = None

    def __post_init__(self):
        if self.k0 < 0 or self.k1 < 0:
            raise UsageError("Lipschitz constants must be nonnegative")
        if self.duration not in ("deterministic", "killed"):
            raise UsageError("duration must be 'deterministic' or 'killed'")
        if self.duration == "killed" and self.boundary_phi is None:
            self.boundary_phi = lambda t: np.zeros(3)

    def check_beta_margins(self, w: BetaWeights) -> None:
        if self.kappa0 is None or self.kappa1 is None:
            return
        if not (w.b0 - self.kappa0 > 0 and w.b1 - self.kappa1 + self.k1**2 / 2 > 0):
            raise UsageError("declared kappas violate the beta margin conditions")


@dataclass
class BsdeSolution:
    Y: np.ndarray             # (K+1, V)
    Z: np.ndarray             # (K+1, V); terminal row zero
    level: int
    dt: float
    scheme: str
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.Y.shape[0] - 1


def _terminal_values(problem: BsdeProblem, kernel: StepKernel, graph) -> np.ndarray:
    psi = problem.terminal_psi
    if callable(psi):
        psi = psi(graph)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (kernel.n_vertices,):
        raise UsageError("terminal data must be one value per vertex")
    return psi.copy()


def _boundary_ids(kernel: StepKernel) -> np.ndarray:
    return np.nonzero(kernel.is_boundary)[0]


def _neighbor_expectations(kernel: StepKernel, y_next: np.ndarray):
    """(E[Y'], E[Y' dW]) per vertex, exact over the uniform neighbor law."""
    yn = y_next[kernel.nbr]           # (V,4); padded slots repeat x itself
    wn = kernel.dW                    # padded slots carry dW = 0
    deg = kernel.deg
    full = yn.sum(axis=1)
    two = yn[:, :2].sum(axis=1)
    ey = np.where(deg == 4, full / 4.0, two / 2.0)
    fullz = (yn * wn).sum(axis=1)
    twoz = (yn[:, :2] * wn[:, :2]).sum(axis=1)
    ez = np.where(deg == 4, fullz / 4.0, twoz / 2.0)
    return ey, ez


def _spot_check_lipschitz(problem: BsdeProblem, kernel: StepKernel, seed=1234):
    if problem.k0 == 0 and problem.k1 == 0:
        return
    rng = Generator(Philox(key=[seed, 0]))
    n = 64
    t = rng.random(n) * problem.horizon
    x = rng.integers(0, kernel.n_vertices, size=n)
    y, yb, z, zb = (rng.standard_normal((4, n)) * 2.0)
    dg = np.abs(problem.g(t, x, y) - problem.g(t, x, yb))
    if np.any(dg > problem.k0 / 2 * np.abs(y - yb) + 1e-9):
        warnings.warn("driver g violates the declared K0/2 Lipschitz bound on samples")
    df = np.abs(problem.f(t, x, y, z) - problem.f(t, x, yb, zb))
    bound = problem.k0 / 2 * np.abs(y - yb) + problem.k1 * np.abs(z - zb)
    if np.any(df > bound + 1e-9):
        warnings.warn("driver f violates the declared Lipschitz bounds on samples")


def solve_dp(problem: BsdeProblem, kernel: StepKernel, graph=None,
             scheme: str = "explicit") -> BsdeSolution:
    """Backward dynamic programming over the chain.

    explicit: the driver's y-argument is the one-step conditional expectation.
    picard-in-step: the y-argument is the in-step fixed point (<=50 inner
    iterations, tolerance 1e-12).
    """
    if scheme not in ("explicit", "picard-in-step"):
        raise UsageError(f"unknown scheme {scheme!r}")
    dt = kernel.dt
    if scheme == "explicit" and dt * problem.k0 >= 1:
        raise UsageError("explicit scheme requires dt*K0 < 1")
    _spot_check_lipschitz(problem, kernel)

    K = int(round(problem.horizon / dt))
    n = kernel.n_vertices
    killed = problem.duration == "killed"
    bnd = _boundary_ids(kernel)
    xs = np.arange(n)

    Y = np.empty((K + 1, n))
    Z = np.zeros((K + 1, n))
    Y[K] = _terminal_values(problem, kernel, graph)
    if killed:
        Y[K][bnd] = np.asarray(problem.boundary_phi(problem.horizon), dtype=float)

    dqv = kernel.dqv
    inner_iterations = 0
    for k in range(K - 1, -1, -1):
        t = k * dt
        ey, ez = _neighbor_expectations(kernel, Y[k + 1])
        z = ez / dqv
        if scheme == "explicit":
            y = ey + problem.g(t, xs, ey) * dt + problem.f(t, xs, ey, z) * dqv
        else:
            y = ey.copy()
            for it in range(50):
                y_new = ey + problem.g(t, xs, y) * dt + problem.f(t, xs, y, z) * dqv
                delta = float(np.abs(y_new - y).max())
                y = y_new
                inner_iterations += 1
                if delta < 1e-12:
                    break
            else:
                raise SchemeError(
                    "picard-in-step fixed point did not converge",
                    {"layer": k, "last_delta": delta},
                )
        if killed:
            y[bnd] = np.asarray(problem.boundary_phi(t), dtype=float)
            z[bnd] = 0.0
        Y[k] = y
        Z[k] = z
    return BsdeSolution(Y=Y, Z=Z, level=kernel.level, dt=dt, scheme=scheme,
                        iterations=inner_iterations)


# --- Picard iteration over the whole horizon ---------------------------------

def picard_iterate(problem: BsdeProblem, kernel: StepKernel, n_iters: int,
                   paths: PathEnsemble, weights: BetaWeights, graph=None,
                   initial: np.ndarray | None = None,
                   stop_rel: float = 1e-13) -> dict:
    """Iterate the frozen-driver linear solve from (Y, Z) = (0, 0).

    Each sweep solves the BSDE whose drivers are evaluated on the previous
    iterate's fields, mirroring the existence proof; distances between
    consecutive iterates are measured in the empirical V^beta norm along the
    supplied frozen path ensemble. Iteration stops once the distance falls
    below stop_rel times the first distance (the numerical floor, where
    ratios are roundoff artifacts).
    """
    dt = kernel.dt
    K = int(round(problem.horizon / dt))
    n = kernel.n_vertices
    killed = problem.duration == "killed"
    bnd = _boundary_ids(kernel)
    xs = np.arange(n)
    terminal = _terminal_values(problem, kernel, graph)
    if killed:
        terminal[bnd] = np.asarray(problem.boundary_phi(problem.horizon), dtype=float)

    y_prev = np.zeros((K + 1, n)) if initial is None else initial.copy()
    z_prev = np.zeros((K + 1, n))
    iterates = []
    distances = []
    for _ in range(n_iters):
        Y = np.empty((K + 1, n))
        Z = np.zeros((K + 1, n))
        Y[K] = terminal
        for k in range(K - 1, -1, -1):
            t = k * dt
            ey, ez = _neighbor_expectations(kernel, Y[k + 1])
            z = ez / kernel.dqv
            y = (ey + problem.g(t, xs, y_prev[k]) * dt
                 + problem.f(t, xs, y_prev[k], z_prev[k]) * kernel.dqv)
            if killed:
                y[bnd] = np.asarray(problem.boundary_phi(t), dtype=float)
                z[bnd] = 0.0
            Y[k] = y
            Z[k] = z
        d = vbeta_norm(paths, Y - y_prev, Z - z_prev, weights)
        distances.append(d)
        iterates.append((Y, Z))
        y_prev, z_prev = Y, Z
        if d <= stop_rel * distances[0]:
            break
    ratios = [distances[i + 1] / distances[i]
              for i in range(len(distances) - 1) if distances[i] > 0]
    return {
        "iterates": iterates,
        "distances": distances,
        "ratios": ratios,
        "final": iterates[-1],
    }


def vbeta_norm(paths: PathEnsemble, y_field: np.ndarray, z_field: np.ndarray,
               weights: BetaWeights) -> float:
    """Empirical V^beta norm of time-vertex fields sampled along paths.

    Per path: sup_k [ y_k^2 e_k + sum_{r>=k} y_r^2 e_r dt
                      + sum_{r>=k} (y_r^2+z_r^2) e_r dqv_r ],
    with e_k = exp(2 b0 t_k + 2 b1 <W>_k); the mean over paths is returned
    (squared norm -> sqrt at the end). Exponents are accumulated in log
    domain when they would overflow.
    """
    K = paths.n_steps
    if y_field.shape[0] != K + 1:
        raise UsageError("field layers do not match the path ensemble steps")
    dt = paths.dt
    tgrid = np.arange(K + 1) * dt
    qv = np.concatenate([np.zeros((paths.n_paths, 1)), paths.cum_qv], axis=1)
    expo = 2 * weights.b0 * tgrid[None, :] + 2 * weights.b1 * qv  # (N, K+1)
    shift = max(0.0, float(expo.max()) - 600.0)
    ew = np.exp(expo - shift)

    yv = y_field[np.arange(K + 1)[None, :], paths.vertices]
    zv = z_field[np.arange(K + 1)[None, :], paths.vertices]

    dqv_step = paths.dqv
    y2e = yv * yv * ew
    run_dr = np.zeros_like(yv)
    run_dqv = np.zeros_like(yv)
    run_dr[:, :-1] = np.cumsum((y2e[:, :-1] * dt)[:, ::-1], axis=1)[:, ::-1]
    zi = (yv[:, :-1] ** 2 + zv[:, :-1] ** 2) * ew[:, :-1] * dqv_step
    run_dqv[:, :-1] = np.cumsum(zi[:, ::-1], axis=1)[:, ::-1]
    total = y2e + run_dr + run_dqv
    sup = total.max(axis=1)
    return math.sqrt(float(sup.mean()) * math.exp(shift))


# --- linear closed form -------------------------------------------------------

def linear_closed_form(a: float, b: float, c: float, problem: BsdeProblem,
                       kernel: StepKernel, graph=None,
                       mc_starts=None, mc_paths: int = 0, seed: int = 0) -> dict:
    """Y_0 for the linear BSDE dY = -aY dt - (bY+cZ) d<W> + Z dW.

    Exact route: backward weighted expectation with the discrete stochastic
    exponential rho(x->y) = 1 + a dt + b dqv(x) + c dW(x->y), algebraically
    identical to the explicit DP for the linear driver. MC route: accumulate
    the same product along sampled paths.
    """
    dt = kernel.dt
    K = int(round(problem.horizon / dt))
    n = kernel.n_vertices
    killed = problem.duration == "killed"
    bnd = _boundary_ids(kernel)

    V = _terminal_values(problem, kernel, graph)
    if killed:
        V[bnd] = np.asarray(problem.boundary_phi(problem.horizon), dtype=float)
    z0 = np.zeros(n)
    for k in range(K - 1, -1, -1):
        vn = V[kernel.nbr]
        w = 1.0 + a * dt + b * kernel.dqv[:, None] + c * kernel.dW
        prod = vn * w
        full = prod.sum(axis=1)
        two = prod[:, :2].sum(axis=1)
        newv = np.where(kernel.deg == 4, full / 4.0, two / 2.0)
        if killed:
            newv[bnd] = np.asarray(problem.boundary_phi(k * dt), dtype=float)
        if k == 0:
            _, ez = _neighbor_expectations(kernel, V)
            z0 = ez / kernel.dqv
        V = newv
    out = {"Y0": V, "Z0": z0}

    if mc_paths and mc_starts is not None:
        psi = _terminal_values(problem, kernel, graph)
        est = {}
        rng_offset = 0
        for sx in mc_starts:
            vals = _mc_linear(kernel, problem, a, b, c, int(sx), mc_paths,
                              seed + rng_offset, psi, killed)
            est[int(sx)] = vals
            rng_offset += 1
        out["mc"] = est
    return out


def _mc_linear(kernel, problem, a, b, c, start, n_paths, seed, psi, killed):
    dt = kernel.dt
    K = int(round(problem.horizon / dt))
    bnd_phi = problem.boundary_phi
    rng = Generator(Philox(key=[seed, 2**34]))
    pos = np.full(n_paths, start, dtype=np.int64)
    logw_sign = np.ones(n_paths)
    logw = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    value = np.zeros(n_paths)
    for k in range(K):
        u = rng.random(n_paths)
        d = kernel.deg[pos]
        j = np.minimum((u * d).astype(np.int64), d - 1)
        rho = 1.0 + a * dt + b * kernel.dqv[pos] + c * kernel.dW[pos, j]
        step_w = np.where(alive, rho, 1.0)
        logw_sign *= np.sign(step_w)
        logw += np.log(np.abs(step_w))
        nxt = kernel.nbr[pos, j]
        if killed:
            pos = np.where(alive, nxt, pos)
            arrived = alive & kernel.is_boundary[pos]
            if arrived.any():
                t_arr = (k + 1) * dt
                phi_vals = np.asarray(bnd_phi(t_arr), dtype=float)
                corner_slot = np.searchsorted(np.nonzero(kernel.is_boundary)[0], pos[arrived])
                value[arrived] = phi_vals[corner_slot]
            alive &= ~kernel.is_boundary[pos]
        else:
            pos = nxt
    value[alive] = psi[pos[alive]]
    weights = logw_sign * np.exp(logw)
    samples = weights * value
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(n_paths))
    top = np.sort(np.abs(samples))[-max(1, n_paths // 100):].sum()
    unstable = bool(top > 0.5 * np.abs(samples).sum())
    return {"estimate": mean, "stderr": stderr, "unstable": unstable}


# --- monotonicity spot checks --------------------------------------------------

def monotonicity_check(problem: BsdeProblem, weights: BetaWeights | None = None,
                       samples: int = 512, seed: int = 0) -> dict:
    """Sampled one-sided monotonicity conditions for the declared kappas.

    Checks (y-yb)(g(y)-g(yb)) <= -kappa0 |y-yb|^2 and the analogue for f in
    y, plus the beta margin inequalities when weights are supplied. Raises
    DeclaredConstantError on violation.
    """
    if problem.kappa0 is None or problem.kappa1 is None:
        raise UsageError("monotonicity check requires declared kappa constants")
    rng = Generator(Philox(key=[seed, 77]))
    t = rng.random(samples) * problem.horizon
    x = rng.integers(0, 3, size=samples)
    y, yb = rng.standard_normal((2, samples)) * 3.0
    z = rng.standard_normal(samples) * 3.0

    dy = y - yb
    lhs_g = dy * (problem.g(t, x, y) - problem.g(t, x, yb))
    margin_g = float((-problem.kappa0 * dy * dy - lhs_g).min())
    lhs_f = dy * (problem.f(t, x, y, z) - problem.f(t, x, yb, z))
    margin_f = float((-problem.kappa1 * dy * dy - lhs_f).min())

    report = {"worst_margin_g": margin_g, "worst_margin_f": margin_f}
    tol = -1e-9
    if margin_g < tol or margin_f < tol:
        raise DeclaredConstantError(
            "sampled monotonicity conditions contradict the declared kappas",
            report,
        )
    if weights is not None:
        problem.check_beta_margins(weights)
        report["beta_margins_ok"] = True
    return report
