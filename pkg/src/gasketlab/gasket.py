"""Exact combinatorics and geometry of the level-m gasket approximations V_m.

Coordinates are exact rationals in the basis (1, sqrt(3)): a vertex stores
(x, y) with Euclidean position (x, y*sqrt(3)). Midpoints of exact points are
exact, so vertex deduplication is by coordinate key, never by tolerance.

Corner order is significant everywhere: a cell's corners are listed as the
images of (p1, p2, p3), because the restriction matrices act on triples in
that order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import CapacityError, UsageError

MAX_LEVEL = 12  # |V_12| ~ 8e5 vertices; deeper levels exhaust memory for no gain

Coord = tuple[Fraction, Fraction]

P1: Coord = (Fraction(0), Fraction(0))
P2: Coord = (Fraction(1), Fraction(0))
P3: Coord = (Fraction(1, 2), Fraction(1, 2))  # (1/2, (1/2)*sqrt3)

BOUNDARY_COORDS: tuple[Coord, Coord, Coord] = (P1, P2, P3)


@dataclass(frozen=True)
class Vertex:
    id: int
    x: Fraction
    y: Fraction  # coefficient of sqrt(3)
    is_boundary: bool

    def euclidean(self) -> tuple[float, float]:
        return float(self.x), float(self.y) * 3.0**0.5


@dataclass(frozen=True)
class LevelGraph:
    """Immutable level-m graph; safe to share across threads after build."""

    level: int
    vertices: tuple[Vertex, ...]
    edges: tuple[tuple[int, int], ...]
    cells: dict[str, tuple[int, int, int]]  # word -> corner ids in (p1,p2,p3) order
    neighbors_of: tuple[tuple[int, ...], ...]
    boundary_ids: tuple[int, int, int]
    index_by_coord: dict[Coord, int] = field(repr=False, default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def degree(self, v: int) -> int:
        return len(self.neighbors_of[v])

    def cells_at_vertex(self, v: int) -> tuple[str, ...]:
        return self._incidence[v]

    def __post_init__(self):
        inc: list[list[str]] = [[] for _ in range(len(self.vertices))]
        for w, corners in self.cells.items():
            for c in corners:
                inc[c].append(w)
        object.__setattr__(self, "_incidence", tuple(tuple(ws) for ws in inc))


def _midpoint(a: Coord, b: Coord) -> Coord:
    return ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)


def build_level_graph(m: int) -> LevelGraph:
    """Construct V_m with cells, edges and exact coordinates.

    Refinement rule: the child cell w+str(i) of a cell with corners
    (v1, v2, v3) has corners (mid(v_j, v_i))_j, with corner i staying put.
    """
    if not (0 <= m <= MAX_LEVEL):
        raise CapacityError(f"level {m} outside guard range 0..{MAX_LEVEL}")

    index: dict[Coord, int] = {}

    def vid(c: Coord) -> int:
        if c not in index:
            index[c] = len(index)
        return index[c]

    for c in BOUNDARY_COORDS:
        vid(c)

    cells_coords: dict[str, tuple[Coord, Coord, Coord]] = {"": BOUNDARY_COORDS}
    for _ in range(m):
        nxt: dict[str, tuple[Coord, Coord, Coord]] = {}
        for w, cs in cells_coords.items():
            for i in (1, 2, 3):
                vi = cs[i - 1]
                nxt[w + str(i)] = tuple(_midpoint(c, vi) for c in cs)
        cells_coords = nxt

    cells = {w: tuple(vid(c) for c in cs) for w, cs in sorted(cells_coords.items())}

    edge_set: set[tuple[int, int]] = set()
    for a, b, c in cells.values():
        for e in ((a, b), (a, c), (b, c)):
            edge_set.add((min(e), max(e)))
    edges = tuple(sorted(edge_set))

    nbrs: list[list[int]] = [[] for _ in range(len(index))]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)

    boundary_ids = tuple(index[c] for c in BOUNDARY_COORDS)
    vertices = tuple(
        Vertex(i, c[0], c[1], i in boundary_ids)
        for c, i in sorted(index.items(), key=lambda kv: kv[1])
    )

    g = LevelGraph(
        level=m,
        vertices=vertices,
        edges=edges,
        cells=cells,
        neighbors_of=tuple(tuple(sorted(ns)) for ns in nbrs),
        boundary_ids=boundary_ids,
        index_by_coord=index,
    )
    assert g.n_vertices == (3 ** (m + 1) + 3) // 2
    assert g.n_edges == 3 ** (m + 1)
    return g


def cell_corners(word: str, g: LevelGraph) -> tuple[int, int, int]:
    """Corner vertex ids of the addressed cell, in (p1, p2, p3)-image order."""
    if len(word) != g.level:
        raise UsageError(f"word length {len(word)} != graph level {g.level}")
    if word not in g.cells:
        raise UsageError(f"unknown cell word {word!r}")
    return g.cells[word]


def neighbors(v: int, g: LevelGraph) -> set[int]:
    if not (0 <= v < g.n_vertices):
        raise UsageError(f"unknown vertex id {v}")
    return set(g.neighbors_of[v])


def vertex_by_coord(g: LevelGraph, coord: Coord) -> int:
    key = (Fraction(coord[0]), Fraction(coord[1]))
    if key not in g.index_by_coord:
        raise UsageError(f"no vertex at exact coordinate {coord}")
    return g.index_by_coord[key]


def subtriangle_vertex_map(g_child: LevelGraph, g_parent: LevelGraph, i: int) -> list[int]:
    """Ids in g_child of F_i(V_parent): entry v is the image of parent vertex v."""
    if g_child.level != g_parent.level + 1:
        raise UsageError("child graph must be one level deeper than parent")
    pi = BOUNDARY_COORDS[i - 1]
    out = []
    for v in g_parent.vertices:
        img = ((v.x + pi[0]) / 2, (v.y + pi[1]) / 2)
        out.append(g_child.index_by_coord[img])
    return out


def graph_to_json(g: LevelGraph) -> dict:
    """JSON-ready export matching the documented schema."""
    return {
        "level": g.level,
        "vertices": [
            {
                "id": v.id,
                "x_rational": f"{v.x.numerator}/{v.x.denominator}",
                "y_coeff_sqrt3_rational": f"{v.y.numerator}/{v.y.denominator}",
                "boundary": v.is_boundary,
            }
            for v in g.vertices
        ],
        "edges": [[a, b] for a, b in g.edges],
        "cells": [{"word": w, "corners": list(c)} for w, c in g.cells.items()],
    }


def graph_json_dumps(g: LevelGraph) -> str:
    return json.dumps(graph_to_json(g), indent=1, sort_keys=True)
