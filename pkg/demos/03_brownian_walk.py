"""The random-walk approximation and its martingale structure.

The step kernel carries, per vertex, the clock rate d<W> and signed
increments dW with exact conditional moments. Three checks run below: the
Revuz normalization E_mu[<W>_T] = T, the level-independence of mean exit
times (the time-calibration witness), and the relaxation of the occupation
law to the Hausdorff measure.
"""

import numpy as np

from gasketlab import (
    WalkConfig,
    build_level_graph,
    build_step_kernel,
    ensemble_qv_stats,
    exit_time_stats,
    occupation_histogram,
)
from gasketlab.measures import hausdorff_measure
from gasketlab.walk import exact_exit_steps, kernel_moment_defects

from fractions import Fraction

MID = (Fraction(3, 4), Fraction(1, 4))  # midpoint of the edge opposite p1

print("kernel invariants (worst conditional mean / second-moment defect):")
for m in (1, 2, 3, 4):
    k = build_step_kernel(build_level_graph(m))
    wm, ws = kernel_moment_defects(k)
    rate = float((k.mu_weight * k.dqv).sum() / k.dt)
    print(f"  m={m}: mean defect {wm:.1e}  second-moment defect {ws:.1e}  "
          f"stationary clock rate {rate:.12f}")

print("\nRevuz correspondence by Monte Carlo at m=4:")
g = build_level_graph(4)
k = build_step_kernel(g)
cfg = WalkConfig(level=4, horizon=1.0, path_count=20000, seed=1)
s = ensemble_qv_stats(cfg, k, g)
print(f"  E_mu[<W>_1] = {s['mean']:.4f} +- {s['stderr']:.4f}  (target 1)")

print("\nmean exit time from the matched start across levels (exact chain + MC):")
for m in (3, 4, 5):
    g = build_level_graph(m)
    k = build_step_kernel(g)
    sid = g.index_by_coord[MID]
    exact = exact_exit_steps(k)[sid] * k.dt
    cfg = WalkConfig(level=m, horizon=2.0, path_count=5000, seed=2, killed=True,
                     start=sid)
    mc = exit_time_stats(cfg, k, g)
    print(f"  m={m}: exact {exact:.6f}   MC {mc['mean']:.6f} +- {mc['stderr']:.6f}")

print("\noccupation law vs the Hausdorff measure (level-1 cells, m=3):")
g = build_level_graph(3)
k = build_step_kernel(g)
mu1 = hausdorff_measure(1)
for t in (0.2, 1.0, 4.0):
    cfg = WalkConfig(level=3, horizon=t, path_count=20000, seed=3)
    h = occupation_histogram(cfg, k, t, cell_level=1, g=g)
    tv = 0.5 * sum(abs(h["masses"].get(w, 0.0) - float(x))
                   for w, x in mu1.masses.items())
    print(f"  t={t}: TV distance to mu = {tv:.4f}")
