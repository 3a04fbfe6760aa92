"""Structured rectangular meshes and their skeleton.

Elements are stored as counter-clockwise vertex polygons; the builder only
produces axis-aligned rectangles. Every edge carries a global orientation
(lexicographically smaller vertex first) so that trace functions on it are
single-valued regardless of which neighbour looks at it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    vertices: tuple[int, int]
    length: float
    boundary: bool
    elements: tuple[int, ...]
    normals: tuple[tuple[float, float], ...]

    def normal_for(self, element: int) -> np.ndarray:
        return np.asarray(self.normals[self.elements.index(element)])


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    elements: np.ndarray
    edges: tuple[Edge, ...]
    # per element: ((edge id, +1 if the CCW traversal matches the global orientation), ...)
    element_edges: tuple[tuple[tuple[int, int], ...], ...]
    domain: tuple[float, float, float, float] = field(default=(0.0, 1.0, 0.0, 1.0))

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_edges(self) -> list[int]:
        return [i for i, e in enumerate(self.edges) if not e.boundary]

    def element_vertices(self, element: int) -> np.ndarray:
        return self.vertices[self.elements[element]]

    def element_box(self, element: int) -> tuple[float, float, float, float]:
        """Return ``(x0, y0, hx, hy)`` of a rectangular element."""
        pts = self.element_vertices(element)
        x0, y0 = pts.min(axis=0)
        x1, y1 = pts.max(axis=0)
        return float(x0), float(y0), float(x1 - x0), float(y1 - y0)

    def element_diameter(self, element: int) -> float:
        pts = self.element_vertices(element)
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=-1)).max())

    def element_area(self, element: int) -> float:
        # shoelace formula
        x, y = self.element_vertices(element).T
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def h_max(self) -> float:
        return max(self.element_diameter(i) for i in range(self.n_elements))

    def edge_points(self, edge: int, t: np.ndarray) -> np.ndarray:
        """Physical points at parameters ``t`` in [0, 1] along the global orientation."""
        a, b = self.vertices[list(self.edges[edge].vertices)]
        t = np.asarray(t, dtype=float)
        return a[None, :] + t[:, None] * (b - a)[None, :]

    def to_dict(self) -> dict:
        return {
            "domain": list(self.domain),
            "vertices": self.vertices.tolist(),
            "elements": self.elements.tolist(),
            "edges": [
                {
                    "vertices": list(e.vertices),
                    "length": e.length,
                    "boundary": e.boundary,
                    "elements": list(e.elements),
                    "normals": [list(n) for n in e.normals],
                }
                for e in self.edges
            ],
            "element_edges": [[list(p) for p in row] for row in self.element_edges],
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def build_uniform_rect(
    n_x: int, n_y: int, domain: Sequence[float] = (0.0, 1.0, 0.0, 1.0)
) -> Mesh:
    """Uniform ``n_x`` by ``n_y`` grid of rectangles.

    Parameters
    ----------
    n_x, n_y : int
        Number of elements per direction.
    domain : (x_min, x_max, y_min, y_max)
        Axis-aligned rectangle to cover.
    """
    if int(n_x) != n_x or int(n_y) != n_y or n_x < 1 or n_y < 1:
        raise MeshError(f"element counts must be positive integers, got ({n_x}, {n_y})")
    n_x, n_y = int(n_x), int(n_y)
    x_min, x_max, y_min, y_max = map(float, domain)
    if not (x_max > x_min and y_max > y_min):
        raise MeshError(f"degenerate domain {tuple(domain)}")

    xs = np.linspace(x_min, x_max, n_x + 1)
    ys = np.linspace(y_min, y_max, n_y + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n_x + 1) + i

    elements = np.array(
        [
            [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
            for j in range(n_y)
            for i in range(n_x)
        ],
        dtype=np.int64,
    )

    def key(a, b):
        # lexicographic order on coordinates decides the global orientation
        return (a, b) if tuple(vertices[a]) < tuple(vertices[b]) else (b, a)

    edge_ids: dict[tuple[int, int], int] = {}
    incident: list[list[int]] = []
    normals: list[list[tuple[float, float]]] = []
    element_edges = []
    for k, quad in enumerate(elements):
        row = []
        for m in range(4):
            a, b = int(quad[m]), int(quad[(m + 1) % 4])
            g = key(a, b)
            if g not in edge_ids:
                edge_ids[g] = len(edge_ids)
                incident.append([])
                normals.append([])
            eid = edge_ids[g]
            tangent = vertices[b] - vertices[a]
            n = np.array([tangent[1], -tangent[0]]) / np.linalg.norm(tangent)
            incident[eid].append(k)
            normals[eid].append((float(n[0]), float(n[1])))
            row.append((eid, 1 if g == (a, b) else -1))
        element_edges.append(tuple(row))

    edges = []
    for (a, b), eid in sorted(edge_ids.items(), key=lambda kv: kv[1]):
        edges.append(
            Edge(
                vertices=(a, b),
                length=float(np.linalg.norm(vertices[b] - vertices[a])),
                boundary=len(incident[eid]) == 1,
                elements=tuple(incident[eid]),
                normals=tuple(normals[eid]),
            )
        )
    return Mesh(
        vertices=vertices,
        elements=elements,
        edges=tuple(edges),
        element_edges=tuple(element_edges),
        domain=(x_min, x_max, y_min, y_max),
    )


def mesh_metrics(mesh: Mesh) -> tuple[float, float]:
    """Return ``(h_max, tau)`` where tau is the smallest ratio h_e / h_K over incident pairs."""
    ratios = []
    for k in range(mesh.n_elements):
        h_k = mesh.element_diameter(k)
        ratios.extend(mesh.edges[e].length / h_k for e, _ in mesh.element_edges[k])
    return mesh.h_max, min(ratios)
