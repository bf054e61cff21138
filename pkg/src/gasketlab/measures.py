"""Hausdorff measure, Kusuoka measure, energy measures, singularity diagnostics.

All cell masses are exact Fractions. The Kusuoka mass of a cell is

    nu(w) = (1/2)(5/3)^m tr(Y_[w]^T Y_[w]),   Y_[w] = Y_{wm} ... Y_{w1},

with the empty-word product taken to be P (trace restricted to range P), so
nu(gasket) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import UsageError
from .exact import (
    A_MATS,
    Y_MATS,
    frobenius_sq,
    mat_mul,
    mat_vec,
    quad_form_p,
    y_product,
    validate_word,
)
from .harmonic import _as_triple

MAX_TABLE_LEVEL = 10


@dataclass(frozen=True)
class CellMeasure:
    kind: str  # 'hausdorff' | 'kusuoka' | 'energy-of(u)'
    level: int
    masses: dict[str, Fraction]

    def total(self) -> Fraction:
        return sum(self.masses.values(), Fraction(0))

    def mass(self, word: str) -> Fraction:
        if word not in self.masses:
            raise UsageError(f"word {word!r} not at level {self.level}")
        return self.masses[word]


def hausdorff_mass(word: str) -> Fraction:
    validate_word(word)
    return Fraction(1, 3) ** len(word)


def kusuoka_mass(word: str) -> Fraction:
    validate_word(word)
    yw = y_product(word)
    return Fraction(1, 2) * Fraction(5, 3) ** len(word) * frobenius_sq(yw)


def _words_and_products(m: int, seed, extend):
    """DFS over level-m words carrying an exact product; yields (word, prod)."""
    stack = [("", seed)]
    while stack:
        w, prod = stack.pop()
        if len(w) == m:
            yield w, prod
        else:
            for i in (1, 2, 3):
                stack.append((w + str(i), extend(i, prod)))


def hausdorff_measure(m: int) -> CellMeasure:
    mass = Fraction(1, 3) ** m
    words = _all_words(m)
    return CellMeasure("hausdorff", m, {w: mass for w in words})


def _all_words(m: int) -> list[str]:
    words = [""]
    for _ in range(m):
        words = [w + s for w in words for s in "123"]
    return words


def kusuoka_measure(m: int) -> CellMeasure:
    if m > MAX_TABLE_LEVEL:
        raise UsageError(f"table level above guard {MAX_TABLE_LEVEL}")
    scale = Fraction(1, 2) * Fraction(5, 3) ** m
    masses = {
        w: scale * frobenius_sq(prod)
        for w, prod in _words_and_products(
            m, y_product(""), lambda i, p: mat_mul(Y_MATS[i], p)
        )
    }
    return CellMeasure("kusuoka", m, masses)


def energy_measure_table(u, m: int) -> CellMeasure:
    """Cell masses of nu_<Hu> at level m; total equals harmonic_energy(u)."""
    if m > MAX_TABLE_LEVEL:
        raise UsageError(f"table level above guard {MAX_TABLE_LEVEL}")
    base = _as_triple(u)
    scale = Fraction(3, 2) * Fraction(5, 3) ** m
    masses = {
        w: scale * quad_form_p(triple)
        for w, triple in _words_and_products(
            m, base, lambda i, t: mat_vec(A_MATS[i], t)
        )
    }
    return CellMeasure(f"energy-of({tuple(str(x) for x in base)})", m, masses)


def kusuoka_identity_check(m: int) -> Fraction:
    """Max cell defect of nu = (1/3)(nu_<h1> + nu_<h2> + nu_<h3>), exact.

    The two sides go through independent product routes: Y-products for nu,
    A-products for the energy measures.
    """
    if m > 8:
        raise UsageError("identity check guarded to m <= 8")
    third = Fraction(1, 3)
    e = [(Fraction(1), Fraction(0), Fraction(0)),
         (Fraction(0), Fraction(1), Fraction(0)),
         (Fraction(0), Fraction(0), Fraction(1))]
    nu_scale = Fraction(1, 2) * Fraction(5, 3) ** m
    en_scale = Fraction(3, 2) * Fraction(5, 3) ** m
    worst = Fraction(0)

    stack = [("", y_product(""), (e[0], e[1], e[2]))]
    while stack:
        w, yprod, triples = stack.pop()
        if len(w) == m:
            nu_w = nu_scale * frobenius_sq(yprod)
            en_sum = sum((en_scale * quad_form_p(t) for t in triples), Fraction(0))
            defect = abs(nu_w - third * en_sum)
            if defect > worst:
                worst = defect
        else:
            for i in (1, 2, 3):
                stack.append(
                    (
                        w + str(i),
                        mat_mul(Y_MATS[i], yprod),
                        tuple(mat_vec(A_MATS[i], t) for t in triples),
                    )
                )
    return worst


def singularity_diagnostic(m: int) -> dict:
    """Density ratios nu(w) * 3^m over level-m words.

    The ratio along the word 1^m equals (1/2)[(9/5)^m + (1/5)^m] exactly; its
    growth is the finite-level face of the mutual singularity of nu and mu.
    """
    table = kusuoka_measure(m)
    three_m = Fraction(3) ** m
    ratios = {w: mass * three_m for w, mass in table.masses.items()}
    word1 = "1" * m
    expected1 = Fraction(1, 2) * (Fraction(9, 5) ** m + Fraction(1, 5) ** m)
    assert ratios[word1] == expected1
    max_word = max(ratios, key=lambda w: (ratios[w], w))
    min_word = min(ratios, key=lambda w: (ratios[w], w))
    return {
        "level": m,
        "max_ratio": ratios[max_word],
        "min_ratio": ratios[min_word],
        "max_word": max_word,
        "min_word": min_word,
        "ratio_at_word_1m": ratios[word1],
    }
