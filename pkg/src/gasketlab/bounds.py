"""Special functions and quantitative bound checks: Mittag-Leffler series,
the Beta-chain telescoping identity, moment and exponential-moment envelopes
for the quadratic clock, and the spectral constants.

All bound checks are one-sided inequality assertions against fitted
constants; the underlying universal constant is not pinned by theory, and the
fitted values for different checks need not coincide (one joint constant is
reported for convenience).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .errors import UsageError

SPECTRAL_DIMENSION = 2.0 * math.log(3.0) / math.log(5.0)
GAMMA_S = 1.0 - SPECTRAL_DIMENSION / 2.0


@dataclass(frozen=True)
class SpectralConstants:
    d_s: float = SPECTRAL_DIMENSION
    gamma_s: float = GAMMA_S

    def __post_init__(self):
        assert 1.0 < self.d_s < 2.0
        assert 0.0 < self.gamma_s < 0.5


def mittag_leffler(a: float, b: float, z: float) -> float:
    """E_{a,b}(z) = sum_p z^p / Gamma(a p + b) by direct summation.

    Terms are accumulated with fsum; summation stops when the tail is below
    1e-14 relative to the running sum. Arguments far enough into the
    super-exponential growth region trip the overflow guard.
    """
    if a <= 0 or b <= 0:
        raise UsageError("Mittag-Leffler parameters must satisfy a, b > 0")
    terms = [1.0 / math.gamma(b)]
    if z == 0.0:
        return terms[0]
    logaz = math.log(abs(z))
    sign = -1.0 if z < 0 else 1.0
    p = 1
    while True:
        logt = p * logaz - gammaln(a * p + b)
        if logt > 700.0:
            raise OverflowError(
                f"Mittag-Leffler term overflow at p={p} for a={a}, b={b}, z={z}"
            )
        t = math.exp(logt)
        terms.append(t * (sign ** p))
        partial = abs(math.fsum(terms))
        if t <= 1e-14 * max(partial, 1e-300) and a * p + b > abs(z) ** (1.0 / a) + a:
            break
        p += 1
        if p > 100_000:
            raise UsageError("Mittag-Leffler series did not settle")
    return math.fsum(terms)


def _chain_integral(p: int, gamma: float) -> float:
    """Simplex integral of prod (theta_i - theta_{i-1})^{gamma-1} by a chain
    of singular 1-D adaptive quadratures.

    Uses only the elementary scaling G_k(s) = s^{k gamma} G_k(1) (change of
    variables), never the Beta/Gamma identity being tested:
        G_k(1) = G_{k-1}(1) * int_0^1 x^{(k-1)gamma} (1-x)^{gamma-1} dx.
    """
    total = quad(lambda x: 1.0, 0.0, 1.0, weight="alg", wvar=(gamma - 1.0, 0.0))[0]
    for k in range(2, p + 1):
        inner, err = quad(
            lambda x: 1.0, 0.0, 1.0,
            weight="alg", wvar=((k - 1) * gamma, gamma - 1.0),
        )
        if not math.isfinite(inner):
            raise UsageError(
                f"quadrature failed near the singular faces at stage {k}; refine gamma"
            )
        total *= inner
    return total


def beta_chain_identity(p: int, gamma: float) -> dict:
    """Both sides of the telescoped simplex integral and their relative gap.

    lhs: recursive 1-D adaptive quadrature (see _chain_integral).
    rhs: Gamma(gamma)^p / Gamma(p gamma + 1).
    """
    if not (1 <= p <= 4):
        raise UsageError("p must be between 1 and 4 (integration cost guard)")
    if not (0.0 < gamma < 1.0):
        raise UsageError("gamma must lie in (0, 1)")
    lhs = _chain_integral(p, gamma)
    rhs = math.exp(p * gammaln(gamma) - gammaln(p * gamma + 1.0))
    return {"p": p, "gamma": gamma, "lhs": lhs, "rhs": rhs,
            "rel_gap": abs(lhs - rhs) / rhs}


def nested_simplex_integral_p2(gamma: float) -> float:
    """Fully nested 2-D route for p = 2 (crosscheck for the chain reduction):
    the inner theta_1 integral desingularized by theta_1 = theta_2 * x leaves
    the outer weight theta_2^{2 gamma - 1} with no upper-endpoint factor."""
    inner, _ = quad(lambda x: 1.0, 0.0, 1.0, weight="alg",
                    wvar=(gamma - 1.0, gamma - 1.0))
    outer, _ = quad(lambda t: 1.0, 0.0, 1.0, weight="alg",
                    wvar=(2.0 * gamma - 1.0, 0.0))
    return inner * outer


def fit_moment_constant(qv_samples: dict, gamma_s: float = GAMMA_S,
                        p_max: int = 4) -> dict:
    """Smallest C with E[A_t^p]/p! <= (C t^gamma_s)^p / Gamma(p gamma_s + 1)
    per (p, t) cell, and the single joint constant (their max).

    qv_samples maps t -> array of <W>_t samples.
    """
    cells = []
    for t, samples in sorted(qv_samples.items()):
        arr = np.asarray(samples, dtype=float)
        for p in range(1, p_max + 1):
            mom = float((arr ** p).mean()) / math.factorial(p)
            c = (mom * math.exp(gammaln(p * gamma_s + 1.0))) ** (1.0 / p) / t ** gamma_s
            cells.append({"t": t, "p": p, "C": c, "moment_over_pfact": mom})
    cstar = max(cell["C"] for cell in cells)
    p1 = {cell["t"]: cell["moment_over_pfact"] / cell["t"]
          for cell in cells if cell["p"] == 1}
    return {"cells": cells, "C": cstar, "first_moment_over_t": p1}


def check_moment_bound(qv_samples: dict, C: float, gamma_s: float = GAMMA_S,
                       p_max: int = 4) -> dict:
    """Margins of the fitted moment envelope; all must be >= 0."""
    rows = []
    ok = True
    for t, samples in sorted(qv_samples.items()):
        arr = np.asarray(samples, dtype=float)
        for p in range(1, p_max + 1):
            lhs = float((arr ** p).mean()) / math.factorial(p)
            rhs = (C * t ** gamma_s) ** p * math.exp(-gammaln(p * gamma_s + 1.0))
            rows.append({"t": t, "p": p, "lhs": lhs, "rhs": rhs,
                         "margin": rhs - lhs})
            ok &= lhs <= rhs * (1 + 1e-12)
    return {"rows": rows, "holds": ok}


def check_mittag_leffler_bound(expint_table: dict, C: float,
                               gamma_s: float = GAMMA_S) -> dict:
    """Margins of sup_x E_x[e^{beta A_t}] <= E_{gamma_s,1}[C beta max(t, t^gamma_s)].

    expint_table maps (beta, t) -> measured max over starts of the MC
    estimate of E_x[e^{beta A_t}].
    """
    rows = []
    ok = True
    for (beta, t), lhs in sorted(expint_table.items()):
        z = C * beta * max(t, t ** gamma_s)
        rhs = mittag_leffler(gamma_s, 1.0, z)
        rows.append({"beta": beta, "t": t, "lhs": lhs, "rhs": rhs,
                     "margin": rhs - lhs})
        ok &= lhs <= rhs
    return {"rows": rows, "holds": ok}


def fit_joint_constant(qv_samples: dict, expint_table: dict,
                       gamma_s: float = GAMMA_S, p_max: int = 4) -> dict:
    """One constant satisfying both bound families: the moment fit, enlarged
    by bisection if the Mittag-Leffler side needs more room."""
    fit = fit_moment_constant(qv_samples, gamma_s, p_max)
    c = fit["C"]
    if not check_mittag_leffler_bound(expint_table, c, gamma_s)["holds"]:
        lo, hi = c, c
        while not check_mittag_leffler_bound(expint_table, hi, gamma_s)["holds"]:
            hi *= 2.0
            if hi > 1e6:
                raise UsageError("no finite constant closes the ML bound")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if check_mittag_leffler_bound(expint_table, mid, gamma_s)["holds"]:
                hi = mid
            else:
                lo = mid
        c = hi
    return {
        "C": c,
        "moment_fit": fit,
        "moments": check_moment_bound(qv_samples, c, gamma_s, p_max),
        "mittag_leffler": check_mittag_leffler_bound(expint_table, c, gamma_s),
    }
