"""Geometry of the level graphs and the three cell measures.

Builds a few levels of the vertex approximation, checks the counting
formulas, and tabulates Hausdorff vs Kusuoka cell masses, including the
density ratios whose growth along the word 111... is the finite-level
face of the mutual singularity of the two measures.
"""

from fractions import Fraction

from gasketlab import (
    build_level_graph,
    hausdorff_mass,
    kusuoka_mass,
    kusuoka_measure,
    singularity_diagnostic,
)

for m in range(0, 5):
    g = build_level_graph(m)
    print(f"level {m}: |V| = {g.n_vertices:4d}  edges = {g.n_edges:4d}  "
          f"cells = {len(g.cells):4d}   (formula: (3^{m+1}+3)/2 = "
          f"{(3**(m+1)+3)//2})")

print("\nKusuoka masses at level 2 (exact):")
for w in sorted(kusuoka_measure(2).masses):
    nu = kusuoka_mass(w)
    mu = hausdorff_mass(w)
    print(f"  cell {w}: nu = {str(nu):>8}   mu = {mu}   nu/mu = {nu/mu}")

print("\nDensity ratios nu(w) * 3^m — singularity diagnostic:")
print(f"{'m':>3} {'max ratio':>12} {'min ratio':>12} {'ratio at 1^m':>14}")
for m in range(1, 8):
    d = singularity_diagnostic(m)
    print(f"{m:>3} {float(d['max_ratio']):>12.4f} {float(d['min_ratio']):>12.6f} "
          f"{float(d['ratio_at_word_1m']):>14.4f}")
print("\nThe max ratio grows without bound while the min decays: no")
print("finite density of nu against mu survives refinement.")

closed = Fraction(1, 2) * (Fraction(9, 5) ** 6 + Fraction(1, 5) ** 6)
assert singularity_diagnostic(6)["ratio_at_word_1m"] == closed
print(f"closed form at m=6: (1/2)[(9/5)^6 + (1/5)^6] = {float(closed):.4f} (exact match)")
