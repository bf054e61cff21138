"""Harmonic extension, graph energies E^(m), cell energy measures, gradients.

Convention for E^(m): the sum runs over unordered neighbor pairs with the 1/2
retained,

    E^(m)(u,v) = sum_{unordered edges} (1/2)(5/3)^m [u(x)-u(y)][v(x)-v(y)],

which is the unique reading under which E^(0)(u,u) = (3/2) u^T P u holds; the
ordered-pair reading gives twice that value.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .errors import UsageError
from .exact import (
    A_MATS,
    P_MAT,
    a_product,
    mat_vec,
    quad_form_p,
    validate_word,
)
from .gasket import LevelGraph, build_level_graph

Triple = tuple[Fraction, Fraction, Fraction]


def _as_triple(u) -> Triple:
    if len(u) != 3:
        raise UsageError("boundary data must have exactly 3 values")
    return tuple(Fraction(x) for x in u)


def harmonic_restrict(u, word: str) -> Triple:
    """Corner values of the harmonic extension on the addressed cell.

    Applies the reversed product A_{wm} ... A_{w1} to u; the empty word is the
    identity.
    """
    validate_word(word)
    v = _as_triple(u)
    for s in word:
        v = mat_vec(A_MATS[int(s)], v)
    return v


def harmonic_extend_to_level(u, m: int, g: LevelGraph | None = None) -> list[Fraction]:
    """Values of Hu at every vertex of V_m, exact.

    Well-definedness (the same vertex reached through different cells gets the
    same value) is asserted during the fill.
    """
    if g is None:
        g = build_level_graph(m)
    elif g.level != m:
        raise UsageError("graph level does not match m")
    vals: list[Fraction | None] = [None] * g.n_vertices
    base = _as_triple(u)

    # depth-first over the cell tree, carrying the corner triple
    stack = [("", base)]
    while stack:
        word, triple = stack.pop()
        if len(word) == m:
            for vid, val in zip(g.cells[word], triple):
                if vals[vid] is None:
                    vals[vid] = val
                else:
                    assert vals[vid] == val, "harmonic extension ill-defined"
        else:
            for i in (1, 2, 3):
                stack.append((word + str(i), mat_vec(A_MATS[i], triple)))
    return vals  # type: ignore[return-value]


def graph_energy(g: LevelGraph, u_table, v_table=None):
    """E^(m)(u,v) over the level graph; exact when tables are Fractions."""
    if v_table is None:
        v_table = u_table
    n = g.n_vertices
    if len(u_table) != n or len(v_table) != n:
        raise UsageError("tables must assign a value to every vertex of V_m")
    for t in (u_table, v_table):
        for x in t:
            if x is None:
                raise UsageError("tables must assign a value to every vertex of V_m")
    scale = Fraction(5, 3) ** g.level
    acc = Fraction(0)
    for a, b in g.edges:
        acc += (u_table[a] - u_table[b]) * (v_table[a] - v_table[b])
    return scale * acc / 2


def harmonic_energy(u):
    """E(Hu, Hu) = (3/2) u^T P u, exact."""
    v = _as_triple(u)
    return Fraction(3, 2) * quad_form_p(v)


def cell_energy_measure(u, word: str):
    """nu_<Hu>(cell w) = (3/2)(5/3)^m (A_w u)^T P (A_w u), exact."""
    v = harmonic_restrict(u, word)
    return Fraction(3, 2) * Fraction(5, 3) ** len(word) * quad_form_p(v)


# --- discrete gradients -----------------------------------------------------
#
# Magnitude: |grad u(w)|^2 * nu(w) = (3/2)(5/3)^m v^T P v with v the cell's
# corner triple (the energy-measure mass of the cell's harmonic interpolant),
# so that sum_w grad^2 nu(w) = E(u) exactly for harmonic u.
# Sign: projection of the centered corner triple onto the cell's principal
# harmonic pattern, oriented so that h1's gradient is negative (tie-broken on
# h2 positive; relevant where the principal pattern has no h1 component).


class CellGradientTables:
    """Per-cell float tables backing fast gradient evaluation at one level."""

    def __init__(self, g: LevelGraph):
        self.level = g.level
        self.words = list(g.cells)
        self.corners = np.array([g.cells[w] for w in self.words], dtype=np.int64)
        scale = 1.5 * (5.0 / 3.0) ** g.level
        self.scale = scale
        pf = np.array([[float(x) for x in row] for row in P_MAT])
        nus = np.empty(len(self.words))
        pats = np.empty((len(self.words), 3))
        for k, w in enumerate(self.words):
            aw = np.array([[float(x) for x in row] for row in a_product(w)])
            b = pf @ aw  # centered corner patterns of (h1,h2,h3) on this cell
            nus[k] = 0.5 * (5.0 / 3.0) ** g.level * (b * b).sum()
            uu, _, _ = np.linalg.svd(b)
            e = uu[:, 0]
            d = e @ b[:, 0]
            if abs(d) < 1e-13:
                if e @ b[:, 1] < 0:
                    e = -e
            elif d > 0:
                e = -e
            pats[k] = e
        self.nu = nus
        self.pattern = pats
        self.word_index = {w: k for k, w in enumerate(self.words)}

    def gradients(self, values: np.ndarray) -> np.ndarray:
        """Signed gradient per cell for a vertex-value array."""
        v = values[self.corners]
        vc = v - v.mean(axis=1, keepdims=True)
        q = self.scale * (vc * vc).sum(axis=1)  # (3/2)(5/3)^m v^T P v
        sgn = np.sign((vc * self.pattern).sum(axis=1))
        return sgn * np.sqrt(q / self.nu)


def discrete_gradient(u_table, word: str, g: LevelGraph, tables: CellGradientTables | None = None) -> float:
    """Signed per-cell gradient of a vertex table; see module notes for the
    normalization and the h1-negative sign convention."""
    if len(word) != g.level:
        raise UsageError(f"word length {len(word)} != graph level {g.level}")
    if tables is None:
        tables = CellGradientTables(g)
    vals = np.asarray([float(x) for x in u_table])
    k = tables.word_index[word]
    v = vals[tables.corners[k]]
    vc = v - v.mean()
    q = tables.scale * (vc * vc).sum()
    if tables.nu[k] <= 0:  # Kusuoka cell masses are strictly positive
        raise UsageError("degenerate cell measure")
    s = np.sign(vc @ tables.pattern[k])
    return float(s * math.sqrt(q / tables.nu[k]))


def oscillation_constant_probe(
    sample_count: int, m: int = 6, seed: int = 0
) -> dict:
    """Empirical lower bound for the oscillation constant C_*.

    Samples rational boundary triples, extends harmonically to V_m and
    records osc(Hu)/sqrt(E(u)). Constants are excluded (0/0).
    """
    rng = np.random.default_rng(seed)
    g = build_level_graph(m)
    ratios = []
    triples = [(Fraction(1), Fraction(0), Fraction(0))]
    for _ in range(max(0, sample_count - 1)):
        t = tuple(Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 10))) for _ in range(3))
        if t[0] == t[1] == t[2]:
            continue
        triples.append(t)
    for t in triples:
        e = harmonic_energy(t)
        if e == 0:
            continue
        tab = harmonic_extend_to_level(t, m, g)
        osc = max(tab) - min(tab)
        ratios.append((t, float(osc) / math.sqrt(float(e))))
    best = max(r for _, r in ratios)
    return {
        "level": m,
        "samples": len(ratios),
        "ratios": [(tuple(str(x) for x in t), r) for t, r in ratios],
        "lower_bound": best,
    }
