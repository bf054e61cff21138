"""Weak-form solver: masses, maximum principle, energy identity, Feynman-Kac."""

import math
from fractions import Fraction

import numpy as np
import pytest

from gasketlab import (
    BsdeProblem,
    UsageError,
    WeakPdeProblem,
    assemble_masses,
    solve_dp,
    solve_weak_pde,
    feynman_kac_check,
)
from gasketlab.measures import kusuoka_measure
from gasketlab.pde import stiffness_matrix
from gasketlab.problems import build_problem_pair, validate_problem_dict


def bump(g):
    c = np.array([0.5, math.sqrt(3) / 6])
    pts = np.array([v.euclidean() for v in g.vertices])
    return np.exp(-8 * ((pts - c) ** 2).sum(axis=1))


def zero_g(t, x, u):
    return np.zeros_like(u)


def zero_f(t, x, u, z):
    return np.zeros_like(u)


def test_assemble_masses_level0(graphs):
    mu, nu = assemble_masses(graphs(0))
    assert mu == [Fraction(1, 3)] * 3
    assert nu == [Fraction(1, 3)] * 3


def test_assemble_masses_level1_hand(graphs):
    g = graphs(1)
    mu, nu = assemble_masses(g)
    for v in g.vertices:
        expect = Fraction(1, 9) if v.is_boundary else Fraction(2, 9)
        assert mu[v.id] == expect
    assert sum(mu) == 1 and sum(nu) == 1


def test_assemble_masses_nu_level2_vs_measures(graphs):
    g = graphs(2)
    _, nu = assemble_masses(g)
    table = kusuoka_measure(2)
    expect = [Fraction(0)] * g.n_vertices
    for w, corners in g.cells.items():
        for cvid in corners:
            expect[cvid] += table.masses[w] / 3
    assert nu == expect
    assert sum(nu) == 1


def test_stiffness_is_graph_energy(graphs):
    g = graphs(2)
    S = stiffness_matrix(g)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(g.n_vertices)
    quad = float(u @ (S @ u))
    direct = 0.5 * (5.0 / 3.0) ** 2 * sum(
        (u[a] - u[b]) ** 2 for a, b in g.edges
    )
    assert abs(quad - direct) < 1e-10


def test_constant_solution_preserved(graphs):
    g = graphs(2)
    c = 0.7
    p = WeakPdeProblem(
        g=zero_g, f=zero_f, terminal_psi=np.full(g.n_vertices, c),
        horizon=0.5, level=2, boundary_phi=lambda t: np.full(3, c),
    )
    sol = solve_weak_pde(p, g)
    assert np.abs(sol.u - c).max() < 1e-12
    assert np.abs(sol.gradients).max() < 1e-7


def test_maximum_principle_decay(graphs):
    g = graphs(3)
    p = WeakPdeProblem(
        g=zero_g, f=zero_f, terminal_psi=bump(g), horizon=1.0, level=3,
    )
    sol = solve_weak_pde(p, g)
    sups = np.abs(sol.u).max(axis=1)
    assert all(sups[k] <= sups[k + 1] + 1e-13 for k in range(len(sups) - 1))
    assert sups[0] < 0.1 * sups[-1]  # heat decay with zero boundary


def test_step_guard(graphs):
    g = graphs(1)
    p = WeakPdeProblem(
        g=zero_g, f=zero_f, terminal_psi=np.zeros(g.n_vertices),
        horizon=1.0, level=1, time_step=0.5, lip_g=4.0,
    )
    with pytest.raises(UsageError):
        solve_weak_pde(p, g)


def test_discrete_energy_identity(graphs):
    # for g=f=0, phi=0: mass decay matches 2 h sum_k E(u^k) to O(h)
    g = graphs(2)
    mu_ex, _ = assemble_masses(g)
    mu = np.array([float(x) for x in mu_ex])
    S = stiffness_matrix(g)
    p = WeakPdeProblem(g=zero_g, f=zero_f, terminal_psi=bump(g), horizon=0.5,
                       level=2)
    sol = solve_weak_pde(p, g)
    h = sol.time_step
    K = sol.u.shape[0] - 1
    mass_drop = float((mu * sol.u[K] ** 2).sum() - (mu * sol.u[0] ** 2).sum())
    dissipated = 2 * h * sum(float(sol.u[k] @ (S @ sol.u[k])) for k in range(K))
    assert abs(mass_drop - dissipated) / max(mass_drop, 1e-12) < 10 * h / 0.5


def test_linear_example_vs_closed_form(kernels, graphs):
    # the worked linear parabolic problem against the chain closed form
    from gasketlab.bsde import linear_closed_form

    spec = validate_problem_dict({
        "driver": {"name": "linear", "a": 0.4, "b": 0.2, "c": 0.3},
        "terminal": {"name": "bump"},
        "duration": {"kind": "killed", "T": 1.0},
    })
    m = 4
    g, k = graphs(m), kernels(m)
    wp, bp = build_problem_pair(spec, m)
    sol_pde = solve_weak_pde(wp, g)
    cf = linear_closed_form(0.4, 0.2, 0.3, bp, k, g)
    err = np.abs(sol_pde.u[0] - cf["Y0"]).max()
    assert err < 0.01


def test_residuals_reported(graphs):
    g = graphs(2)
    p = WeakPdeProblem(
        g=lambda t, x, u: -u, f=zero_f, terminal_psi=bump(g), horizon=0.2,
        level=2,
    )
    sol = solve_weak_pde(p, g)
    assert sol.residuals.shape == (int(round(0.2 / sol.time_step)),)
    assert np.isfinite(sol.residuals).all()


def test_feynman_kac_driverless_tiny_gap(kernels, graphs):
    spec = validate_problem_dict({
        "driver": {"name": "zero"},
        "terminal": {"name": "bump"},
        "duration": {"kind": "killed", "T": 0.5},
    })

    def make(level):
        return build_problem_pair(spec, level)

    rep = feynman_kac_check(make, [3], [0.0, 0.25], horizon=0.5)
    # same linear algebra up to the stepping scheme: gap is time-discretization only
    assert rep["sup_errors"][0] < 5e-3


def test_feynman_kac_decreasing_small_ladder():
    spec = validate_problem_dict({
        "driver": {"name": "sin", "a": -1.0, "fy": 0.5, "fz": 0.25},
        "terminal": {"name": "bump"},
        "duration": {"kind": "killed", "T": 1.0},
    })

    def make(level):
        return build_problem_pair(spec, level)

    rep = feynman_kac_check(make, [2, 3, 4], [0.0, 0.25, 0.5, 0.75])
    assert rep["decreasing"]


def test_refinement_consistency(graphs):
    # solutions restricted to V_2 probes form a Cauchy trend over levels
    spec = validate_problem_dict({
        "driver": {"name": "sin", "a": -1.0, "fy": 0.5, "fz": 0.25},
        "terminal": {"name": "bump"},
        "duration": {"kind": "killed", "T": 0.5},
    })
    probe = [(v.x, v.y) for v in graphs(2).vertices]
    fields = []
    for m in (2, 3, 4):
        g = graphs(m)
        wp, _ = build_problem_pair(spec, m)
        sol = solve_weak_pde(wp, g)
        ids = [g.index_by_coord[c] for c in probe]
        fields.append(sol.u[0][ids])
    d1 = np.abs(fields[1] - fields[0]).max()
    d2 = np.abs(fields[2] - fields[1]).max()
    assert d2 < d1
