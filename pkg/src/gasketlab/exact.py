"""Exact rational 3x3 matrix kernel shared by the harmonic and measure modules.

Matrices are tuples of tuples of Fraction, vectors are 3-tuples of Fraction.
All products here are exact; floating conversions happen only at module
boundaries that explicitly ask for them.

Word convention: a cell word w = w1 w2 ... wm over {1,2,3} addresses the cell
F_{w1} o F_{w2} o ... o F_{wm} (unit gasket). Restriction matrices compose in
the reversed order, M_[w] = M_{wm} ... M_{w1}, i.e. the first letter acts
first on boundary data.
"""

from __future__ import annotations

from fractions import Fraction

Mat = tuple[tuple[Fraction, ...], ...]
Vec = tuple[Fraction, Fraction, Fraction]


def _mat(rows, den) -> Mat:
    return tuple(tuple(Fraction(x, den) for x in r) for r in rows)


# Projection onto the mean-zero plane: P = I - (1/3) ones.
P_MAT: Mat = _mat([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]], 3)

# Harmonic restriction matrices: row j of A_i gives the harmonic value at the
# j-th corner image of cell i in terms of the three parent corner values.
A_MATS: dict[int, Mat] = {
    1: _mat([[5, 0, 0], [2, 2, 1], [2, 1, 2]], 5),
    2: _mat([[2, 2, 1], [0, 5, 0], [1, 2, 2]], 5),
    3: _mat([[2, 1, 2], [1, 2, 2], [0, 0, 5]], 5),
}

IDENTITY: Mat = tuple(
    tuple(Fraction(1) if i == j else Fraction(0) for j in range(3)) for i in range(3)
)


def mat_mul(x: Mat, y: Mat) -> Mat:
    return tuple(
        tuple(sum(x[i][k] * y[k][j] for k in range(3)) for j in range(3))
        for i in range(3)
    )


def mat_vec(x: Mat, v) -> Vec:
    return tuple(sum(x[i][k] * v[k] for k in range(3)) for i in range(3))


def transpose(x: Mat) -> Mat:
    return tuple(tuple(x[j][i] for j in range(3)) for i in range(3))


def trace(x: Mat) -> Fraction:
    return x[0][0] + x[1][1] + x[2][2]


Y_MATS: dict[int, Mat] = {i: mat_mul(mat_mul(P_MAT, A_MATS[i]), P_MAT) for i in (1, 2, 3)}


def a_product(word: str) -> Mat:
    """A_[w] = A_{wm} ... A_{w1}; empty word gives the identity."""
    m = IDENTITY
    for s in word:
        m = mat_mul(A_MATS[int(s)], m)
    return m


def y_product(word: str) -> Mat:
    """Y_[w] = Y_{wm} ... Y_{w1}; the empty word gives P.

    Using P (the restriction of the identity to range P) for the empty word
    makes the Kusuoka trace formula return total mass 1; every nonempty
    product lands in range P automatically.
    """
    m = P_MAT
    for s in word:
        m = mat_mul(Y_MATS[int(s)], m)
    return m


def frobenius_sq(x: Mat) -> Fraction:
    return sum(x[i][j] * x[i][j] for i in range(3) for j in range(3))


def quad_form_p(v):
    """v^T P v = (1/3) sum_{i<j} (v_i - v_j)^2; exact for Fraction inputs."""
    d01 = v[0] - v[1]
    d02 = v[0] - v[2]
    d12 = v[1] - v[2]
    return (d01 * d01 + d02 * d02 + d12 * d12) / 3


def validate_word(word: str) -> str:
    from .errors import UsageError

    if not all(c in "123" for c in word):
        raise UsageError(f"cell word must use symbols 1,2,3 only: {word!r}")
    return word
