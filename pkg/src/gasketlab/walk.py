"""Random-walk approximation of Brownian motion on V_m with exact martingale
increments for the Brownian-martingale clock.

Construction per vertex x (probabilities uniform over neighbors):

  * dqv(x) = (1/6) sum_i E[(dh_i)^2 | x]   -- the per-step quadratic-variation
    rate; equal weights over the three corner harmonics, normalized so the
    walk's clock has Revuz measure nu: E_mu[<W>_T] = T exactly at stationarity.
  * dW(x->y): the h-increment triple, centered at its conditional mean and
    projected on the principal direction of the centered covariance, rescaled
    so E[dW^2|x] = dqv(x) to machine precision. Centering matters only at the
    three reflected corner rows, where harmonic increments carry the
    reflection drift.
  * Sign convention: the principal direction e(x) has e.(1,0,0) <= 0, and
    e.(0,1,0) > 0 when the h1 component vanishes (the corner p1 row).

Step duration is dt = 5^(-m)/3: with uniform neighbor probabilities the
one-step operator satisfies P = I + dt*L exactly, L being the generator of
(E^(m), mu-lumped vertex masses), so walk time and PDE time agree.

Path generation is block-based with counter RNG streams keyed (seed, block):
results are bit-identical for a given seed regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.random import Generator, Philox

from .errors import CapacityError, UsageError
from .gasket import LevelGraph, build_level_graph, vertex_by_coord
from .harmonic import harmonic_extend_to_level

_START_STREAM_OFFSET = 2**32  # start-sampling streams live far from step streams
MAX_RECORDED_ENTRIES = 20_000_000


def step_duration(level: int) -> float:
    return 5.0 ** (-level) / 3.0


@dataclass(frozen=True)
class StepKernel:
    level: int
    dt: float
    nbr: np.ndarray          # (V,4) neighbor ids, padded with self
    deg: np.ndarray          # (V,)
    dW: np.ndarray           # (V,4) martingale increment per neighbor slot
    dqv: np.ndarray          # (V,) per-step quadratic-variation rate
    direction: np.ndarray    # (V,3) principal unit direction e(x)
    residual: np.ndarray     # (V,) covariance mass off the principal direction
    is_boundary: np.ndarray  # (V,) bool
    mu_weight: np.ndarray    # (V,) lumped Hausdorff vertex masses (sums to 1)
    h_values: np.ndarray     # (V,3) float corner-harmonic values

    @property
    def n_vertices(self) -> int:
        return len(self.deg)


def build_step_kernel(g: LevelGraph) -> StepKernel:
    m = g.level
    n = g.n_vertices
    h_exact = [harmonic_extend_to_level(
        tuple(Fraction(1 if j == i else 0) for j in range(3)), m, g) for i in range(3)]
    hf = np.array([[float(h_exact[i][v]) for i in range(3)] for v in range(n)])

    nbr = np.zeros((n, 4), dtype=np.int64)
    deg = np.zeros(n, dtype=np.int64)
    dWm = np.zeros((n, 4))
    dqv = np.zeros(n)
    direction = np.zeros((n, 3))
    residual = np.zeros(n)

    for x in range(n):
        ns = list(g.neighbors_of[x])
        d = len(ns)
        deg[x] = d
        nbr[x, :d] = ns
        if d < 4:
            nbr[x, d:] = x
        # exact uncentered second moments for the clock rate
        acc = Fraction(0)
        for i in range(3):
            for y in ns:
                diff = h_exact[i][y] - h_exact[i][x]
                acc += diff * diff
        dqv[x] = float(acc / (6 * d))

        dh = hf[ns] - hf[x]                      # (d,3)
        mbar = dh.mean(axis=0)
        cov = dh.T @ dh / d - np.outer(mbar, mbar)
        lam, vecs = np.linalg.eigh(cov)
        e = vecs[:, -1]
        if abs(e[0]) < 1e-13:
            if e[1] < 0:
                e = -e
        elif e[0] > 0:
            e = -e
        raw = (dh - mbar) @ e
        raw -= raw.mean()  # roundoff guard; the projection is centered already
        scale = math.sqrt(dqv[x] / float((raw * raw).mean()))
        dWm[x, :d] = raw * scale
        direction[x] = e
        residual[x] = 1.0 - lam[-1] / cov.trace()

    isb = np.zeros(n, dtype=bool)
    isb[list(g.boundary_ids)] = True
    mu_w = deg.astype(float) / deg.sum()  # = deg * 3^(-m) / 6, the lumped mu

    return StepKernel(
        level=m, dt=step_duration(m), nbr=nbr, deg=deg, dW=dWm, dqv=dqv,
        direction=direction, residual=residual, is_boundary=isb,
        mu_weight=mu_w, h_values=hf,
    )


def kernel_moment_defects(kernel: StepKernel) -> tuple[float, float]:
    """Worst conditional-mean and second-moment defects of dW over vertices."""
    worst_mean = 0.0
    worst_second = 0.0
    for x in range(kernel.n_vertices):
        d = kernel.deg[x]
        w = kernel.dW[x, :d]
        worst_mean = max(worst_mean, abs(float(w.mean())))
        second = float((w * w).mean())
        worst_second = max(worst_second, abs(second - kernel.dqv[x]) / max(kernel.dqv[x], 1e-300))
    return worst_mean, worst_second


@dataclass(frozen=True)
class WalkConfig:
    level: int
    horizon: float
    path_count: int
    seed: int = 0
    killed: bool = False
    start: object = "mu"   # 'mu' | vertex id | cell word | exact coord pair
    block_size: int = 25_000
    workers: int = 1

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / step_duration(self.level)))


def _resolve_start(cfg: WalkConfig, g: LevelGraph, kernel: StepKernel):
    s = cfg.start
    if isinstance(s, str) and s == "mu":
        return None  # sampled per block from the lumped Hausdorff weights
    if isinstance(s, (int, np.integer)):
        if not (0 <= int(s) < kernel.n_vertices):
            raise UsageError(f"unknown start vertex {s}")
        return int(s)
    if isinstance(s, str):
        word = s
        if len(word) != g.level or word not in g.cells:
            raise UsageError(f"start word {word!r} not a level-{g.level} cell")
        return g.cells[word][0]
    if isinstance(s, tuple) and len(s) == 2:
        return vertex_by_coord(g, s)
    raise UsageError(f"cannot interpret start spec {s!r}")


def _block_ranges(n_total: int, block: int):
    out = []
    b = 0
    start = 0
    while start < n_total:
        out.append((b, start, min(start + block, n_total)))
        b += 1
        start += block
    return out


def _simulate_block(args):
    (kernel, n_paths, n_steps, seed, block, killed, start_vertex,
     snap_steps, record) = args
    rng = Generator(Philox(key=[seed, block]))
    nbr, dWm, dqv, deg = kernel.nbr, kernel.dW, kernel.dqv, kernel.deg
    isb = kernel.is_boundary

    if start_vertex is None:
        srng = Generator(Philox(key=[seed, _START_STREAM_OFFSET + block]))
        pos = srng.choice(kernel.n_vertices, size=n_paths, p=kernel.mu_weight)
    else:
        pos = np.full(n_paths, start_vertex, dtype=np.int64)

    cum_qv = np.zeros(n_paths)
    cum_w = np.zeros(n_paths)
    alive = np.ones(n_paths, dtype=bool)
    hit_step = np.full(n_paths, -1, dtype=np.int64)
    snaps = {}
    rec = None
    if record:
        rec = {
            "vertices": np.empty((n_paths, n_steps + 1), dtype=np.int64),
            "dW": np.zeros((n_paths, n_steps)),
            "dqv": np.zeros((n_paths, n_steps)),
        }
        rec["vertices"][:, 0] = pos

    for k in range(n_steps):
        u = rng.random(n_paths)
        d = deg[pos]
        j = np.minimum((u * d).astype(np.int64), d - 1)
        w = dWm[pos, j]
        a = dqv[pos]
        if killed:
            w = np.where(alive, w, 0.0)
            a = np.where(alive, a, 0.0)
        cum_w += w
        cum_qv += a
        nxt = nbr[pos, j]
        if killed:
            pos = np.where(alive, nxt, pos)
            arrived = alive & isb[pos]
            hit_step[arrived] = k + 1
            alive &= ~isb[pos]
        else:
            pos = nxt
        if record:
            rec["vertices"][:, k + 1] = pos
            rec["dW"][:, k] = w
            rec["dqv"][:, k] = a
        if (k + 1) in snap_steps:
            snaps[k + 1] = (cum_qv.copy(), cum_w.copy(), pos.copy())

    out = dict(cum_qv=cum_qv, cum_w=cum_w, pos=pos, alive=alive,
               hit_step=hit_step, snaps=snaps)
    if record:
        out["record"] = rec
    return out


def _run_blocks(cfg: WalkConfig, kernel: StepKernel, g: LevelGraph,
                snap_steps=(), record=False):
    start_vertex = _resolve_start(cfg, g, kernel)
    jobs = [
        (kernel, hi - lo, cfg.n_steps, cfg.seed, b, cfg.killed, start_vertex,
         frozenset(snap_steps), record)
        for b, lo, hi in _block_ranges(cfg.path_count, cfg.block_size)
    ]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_simulate_block, jobs))
    else:
        results = [_simulate_block(j) for j in jobs]

    merged = {
        key: np.concatenate([r[key] for r in results])
        for key in ("cum_qv", "cum_w", "pos", "alive", "hit_step")
    }
    merged["snaps"] = {
        k: tuple(np.concatenate([r["snaps"][k][i] for r in results]) for i in range(3))
        for k in snap_steps
    }
    if record:
        merged["record"] = {
            key: np.concatenate([r["record"][key] for r in results])
            for key in ("vertices", "dW", "dqv")
        }
    return merged


@dataclass(frozen=True)
class PathSample:
    """One trajectory with its martingale increments and hitting data."""

    vertices: np.ndarray
    dW: np.ndarray
    dqv: np.ndarray
    cum_qv: np.ndarray
    hit_step: int          # first arrival step at V_0, -1 if none
    total_steps: int
    dt: float


@dataclass
class PathEnsemble:
    """Fully recorded trajectories (small ensembles only)."""

    config: WalkConfig
    vertices: np.ndarray   # (N, K+1)
    dW: np.ndarray         # (N, K)
    dqv: np.ndarray        # (N, K)
    hit_step: np.ndarray   # (N,) first arrival step at V_0, -1 if none
    dt: float

    def path(self, i: int) -> PathSample:
        return PathSample(
            vertices=self.vertices[i], dW=self.dW[i], dqv=self.dqv[i],
            cum_qv=np.cumsum(self.dqv[i]), hit_step=int(self.hit_step[i]),
            total_steps=self.dW.shape[1], dt=self.dt,
        )

    @property
    def cum_qv(self) -> np.ndarray:
        return np.cumsum(self.dqv, axis=1)

    @property
    def cum_w(self) -> np.ndarray:
        return np.cumsum(self.dW, axis=1)

    @property
    def n_paths(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_steps(self) -> int:
        return self.dW.shape[1]


def simulate_paths(cfg: WalkConfig, kernel: StepKernel,
                   g: LevelGraph | None = None) -> PathEnsemble:
    """Simulate and record full trajectories; guarded by a memory cap."""
    if g is None:
        g = build_level_graph(cfg.level)
    if cfg.level != kernel.level:
        raise UsageError("config level does not match kernel level")
    entries = cfg.path_count * (cfg.n_steps + 1)
    if entries > MAX_RECORDED_ENTRIES:
        raise CapacityError(
            f"recording {entries} samples exceeds the {MAX_RECORDED_ENTRIES} cap; "
            "use the streaming statistics instead"
        )
    r = _run_blocks(cfg, kernel, g, record=True)
    rec = r["record"]
    return PathEnsemble(
        config=cfg, vertices=rec["vertices"], dW=rec["dW"], dqv=rec["dqv"],
        hit_step=r["hit_step"], dt=kernel.dt,
    )


def ensemble_qv_stats(cfg: WalkConfig, kernel: StepKernel,
                      g: LevelGraph | None = None) -> dict:
    """Mean and standard error of <W>_T over the ensemble (streaming)."""
    if g is None:
        g = build_level_graph(cfg.level)
    r = _run_blocks(cfg, kernel, g)
    qv = r["cum_qv"]
    return {
        "mean": float(qv.mean()),
        "stderr": float(qv.std(ddof=1) / math.sqrt(len(qv))),
        "horizon": cfg.horizon,
        "paths": len(qv),
    }


def ensemble_qv_snapshots(cfg: WalkConfig, kernel: StepKernel, times,
                          g: LevelGraph | None = None) -> dict:
    """Samples of <W>_t at the steps nearest the requested times (streaming)."""
    if g is None:
        g = build_level_graph(cfg.level)
    steps = {}
    for t in times:
        k = int(round(t / kernel.dt))
        steps[t] = max(1, min(k, cfg.n_steps))
    r = _run_blocks(cfg, kernel, g, snap_steps=tuple(set(steps.values())))
    return {t: r["snaps"][k][0] for t, k in steps.items()}


def exact_exit_steps(kernel: StepKernel) -> np.ndarray:
    """E[steps to hit V_0] per start vertex from the exact linear system."""
    n = kernel.n_vertices
    inter = ~kernel.is_boundary
    rows, cols, vals = [], [], []
    for x in range(n):
        d = kernel.deg[x]
        for jj in range(d):
            rows.append(x)
            cols.append(kernel.nbr[x, jj])
            vals.append(1.0 / d)
    pmat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    a = (sp.eye(n) - pmat)[inter][:, inter]
    tau = spla.spsolve(a.tocsc(), np.ones(int(inter.sum())))
    full = np.zeros(n)
    full[inter] = tau
    return full


def exit_time_stats(cfg: WalkConfig, kernel: StepKernel,
                    g: LevelGraph | None = None) -> dict:
    """Mean/variance of sigma_V0 in diffusion time, with normal CI.

    A start on V_0 is handled by the t>0 convention: the walk leaves and the
    recorded hit is the first return.
    """
    if not cfg.killed:
        raise UsageError("exit-time statistics require killed mode")
    if g is None:
        g = build_level_graph(cfg.level)
    r = _run_blocks(cfg, kernel, g)
    hits = r["hit_step"]
    hit_mask = hits > 0
    frac = float(hit_mask.mean())
    out = {"hit_fraction": frac, "paths": len(hits), "horizon": cfg.horizon}
    if frac < 0.99:
        out["warning"] = (
            f"only {frac:.1%} of paths hit V_0 before the horizon; "
            "mean is conditional on hitting"
        )
    times = hits[hit_mask] * kernel.dt
    if len(times):
        out["mean"] = float(times.mean())
        out["variance"] = float(times.var(ddof=1)) if len(times) > 1 else 0.0
        out["stderr"] = float(times.std(ddof=1) / math.sqrt(len(times))) if len(times) > 1 else 0.0
    return out


def occupation_histogram(cfg: WalkConfig, kernel: StepKernel, t: float,
                         cell_level: int | None = None,
                         g: LevelGraph | None = None) -> dict:
    """Empirical cell measure of X_t over level-k cells.

    A vertex position splits its weight equally over the incident level-m
    cells (the same lumping that makes the stationary law equal mu exactly),
    then aggregates to word prefixes of length k.
    """
    if g is None:
        g = build_level_graph(cfg.level)
    if t < kernel.dt:
        raise UsageError("t must be at least one step")
    k_level = cfg.level if cell_level is None else cell_level
    if k_level > cfg.level:
        raise UsageError("cell level cannot exceed walk level")
    step = int(round(t / kernel.dt))
    step = max(1, min(step, cfg.n_steps))
    r = _run_blocks(cfg, kernel, g, snap_steps=(step,))
    pos = r["snaps"][step][2]

    hist: dict[str, float] = {}
    counts = np.bincount(pos, minlength=kernel.n_vertices).astype(float)
    counts /= counts.sum()
    for x in np.nonzero(counts)[0]:
        cells = g.cells_at_vertex(int(x))
        share = counts[x] / len(cells)
        for w in cells:
            key = w[:k_level]
            hist[key] = hist.get(key, 0.0) + share
    return {"t": step * kernel.dt, "cell_level": k_level, "masses": hist}


def total_variation_vs_measure(hist: dict, masses: dict) -> float:
    words = set(hist["masses"]) | set(masses)
    return 0.5 * sum(
        abs(hist["masses"].get(w, 0.0) - float(masses.get(w, 0))) for w in words
    )


def expint_estimate(cfg: WalkConfig, kernel: StepKernel, beta: float,
                    t: float | None = None, g: LevelGraph | None = None) -> dict:
    """MC estimate of E[e^{beta <W>_tau}] with a percentile-bootstrap CI.

    tau is min(t, horizon) steps in reflected mode and sigma_V0 ^ horizon in
    killed mode. Accumulation is done on log weights; the estimate is flagged
    unstable when the top 1% of samples carries more than half the mass.
    """
    if beta < 0:
        raise UsageError("beta must be nonnegative")
    if g is None:
        g = build_level_graph(cfg.level)
    snap = ()
    if t is not None:
        step = int(round(t / kernel.dt))
        step = max(1, min(step, cfg.n_steps))
        snap = (step,)
    r = _run_blocks(cfg, kernel, g, snap_steps=snap)
    qv = r["snaps"][snap[0]][0] if snap else r["cum_qv"]

    logw = beta * qv
    mx = float(logw.max()) if len(logw) else 0.0
    scaled = np.exp(logw - mx)
    mean = float(scaled.mean())
    est = math.exp(mx) * mean

    rng = Generator(Philox(key=[cfg.seed, 2**33]))
    n = len(scaled)
    boots = np.empty(200)
    for i in range(200):
        idx = rng.integers(0, n, size=n)
        boots[i] = scaled[idx].mean()
    lo, hi = np.percentile(boots, [2.5, 97.5])
    top = np.sort(scaled)[-max(1, n // 100):].sum()
    unstable = bool(top > 0.5 * scaled.sum())
    return {
        "estimate": est,
        "ci95": (math.exp(mx) * float(lo), math.exp(mx) * float(hi)),
        "beta": beta,
        "unstable": unstable,
        "paths": n,
    }
