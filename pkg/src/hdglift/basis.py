"""Quadrature rules and orthonormal polynomial bases on the reference cells.

The reference element is the unit square and the reference edge the unit
interval. Element functions span the *total degree* space P_k, built from
products of shifted orthonormal Legendre polynomials l_a(x) l_b(y) with
a + b <= k; this family is L2-orthonormal on [0, 1]^2 and spans exactly P_k.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

K_MAX = 8

_TABULATION_CACHE: dict = {}


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, dim) reference coordinates
    weights: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_rule(q: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``q`` points on [0, 1], exact to degree 2q - 1."""
    if int(q) != q or q < 1:
        raise ValueError(f"number of Gauss points must be >= 1, got {q}")
    x, w = legendre.leggauss(int(q))
    return QuadratureRule(points=(0.5 * (x + 1.0))[:, None], weights=0.5 * w)


@lru_cache(maxsize=None)
def square_rule(q: int) -> QuadratureRule:
    """Tensor Gauss rule on [0, 1]^2."""
    g = gauss_rule(q)
    s = g.points[:, 0]
    X, Y = np.meshgrid(s, s, indexing="ij")
    W = np.outer(g.weights, g.weights)
    return QuadratureRule(points=np.column_stack([X.ravel(), Y.ravel()]), weights=W.ravel())


def _legendre_01(t: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal shifted Legendre values and derivatives on [0, 1], shape (len(t), k + 1)."""
    t = np.asarray(t, dtype=float)
    x = 2.0 * t - 1.0
    scale = np.sqrt(2.0 * np.arange(k + 1) + 1.0)
    vals = legendre.legvander(x, k) * scale
    if k == 0:
        return vals, np.zeros_like(vals)
    dcoef = legendre.legder(np.eye(k + 1), axis=0)  # column j holds P_j'
    ders = 2.0 * (legendre.legvander(x, k - 1) @ dcoef) * scale
    return vals, ders


def _check_degree(k: int) -> int:
    if int(k) != k or not 1 <= k <= K_MAX:
        raise ValueError(f"polynomial degree must lie in [1, {K_MAX}], got {k}")
    return int(k)


@dataclass(frozen=True)
class TraceBasis:
    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, t: np.ndarray) -> np.ndarray:
        return _legendre_01(np.ravel(t), self.degree)[0]


@dataclass(frozen=True)
class ElementBasis:
    degree: int

    @property
    def dim(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    @property
    def exponents(self) -> list[tuple[int, int]]:
        # ordered by total degree; index 0 is the constant
        return [(d - b, b) for d in range(self.degree + 1) for b in range(d + 1)]

    def tabulate(self, ref_points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (n, dim) and reference gradients (n, dim, 2) at reference points."""
        p = np.atleast_2d(np.asarray(ref_points, dtype=float))
        key = (self.degree, p.shape, p.tobytes())
        hit = _TABULATION_CACHE.get(key)
        if hit is not None:
            return hit[0].copy(), hit[1].copy()
        vx, dx = _legendre_01(p[:, 0], self.degree)
        vy, dy = _legendre_01(p[:, 1], self.degree)
        a, b = np.array(self.exponents).T
        vals = vx[:, a] * vy[:, b]
        grads = np.stack([dx[:, a] * vy[:, b], vx[:, a] * dy[:, b]], axis=-1)
        if len(_TABULATION_CACHE) < 4096:
            _TABULATION_CACHE[key] = (vals, grads)
        return vals.copy(), grads.copy()


def element_basis(k: int) -> ElementBasis:
    return ElementBasis(_check_degree(k))


def edge_basis(k: int) -> TraceBasis:
    return TraceBasis(_check_degree(k))


@dataclass(frozen=True)
class RectangleMap:
    """Affine map from the reference square onto ``[x0, x0 + hx] x [y0, y0 + hy]``."""

    x0: float
    y0: float
    hx: float
    hy: float

    def __post_init__(self):
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError(f"degenerate element with extents ({self.hx}, {self.hy})")

    @property
    def jacobian(self) -> float:
        return self.hx * self.hy

    def to_physical(self, ref: np.ndarray) -> np.ndarray:
        ref = np.atleast_2d(ref)
        return np.column_stack([self.x0 + self.hx * ref[:, 0], self.y0 + self.hy * ref[:, 1]])

    def to_reference(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.column_stack([(pts[:, 0] - self.x0) / self.hx, (pts[:, 1] - self.y0) / self.hy])


def eval_on_element(
    basis: ElementBasis, element: RectangleMap, ref_points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Basis values and physical gradients at reference points of ``element``."""
    vals, grads = basis.tabulate(ref_points)
    return vals, grads / np.array([element.hx, element.hy])


@dataclass
class EdgeTables:
    edge: int
    normal: np.ndarray  # outward unit normal of the owning element
    length: float
    t: np.ndarray  # parameters along the global orientation
    weights: np.ndarray  # physical weights (include edge length)
    points: np.ndarray  # physical points
    phi: np.ndarray  # element basis values (nq, n_u)
    grad_phi: np.ndarray  # physical gradients (nq, n_u, 2)
    psi: np.ndarray  # trace basis values (nq, n_t)


@dataclass
class ElementTables:
    """Everything an element-local form needs, evaluated at one quadrature order."""

    element: int
    geometry: RectangleMap
    points: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    grad_phi: np.ndarray
    edges: list[EdgeTables]

    @property
    def n_u(self) -> int:
        return self.phi.shape[1]


def tabulate_element(mesh, element: int, ebasis: ElementBasis, tbasis: TraceBasis, q: int) -> ElementTables:
    geom = RectangleMap(*mesh.element_box(element))
    rule = square_rule(q)
    phi, grad_phi = eval_on_element(ebasis, geom, rule.points)
    line = gauss_rule(q)
    t = line.points[:, 0]
    psi = tbasis.values(t)
    edges = []
    for eid, _sign in mesh.element_edges[element]:
        edge = mesh.edges[eid]
        pts = mesh.edge_points(eid, t)
        ephi, egrad = eval_on_element(ebasis, geom, geom.to_reference(pts))
        edges.append(
            EdgeTables(
                edge=eid,
                normal=edge.normal_for(element),
                length=edge.length,
                t=t,
                weights=line.weights * edge.length,
                points=pts,
                phi=ephi,
                grad_phi=egrad,
                psi=psi,
            )
        )
    return ElementTables(
        element=element,
        geometry=geom,
        points=geom.to_physical(rule.points),
        weights=rule.weights * geom.jacobian,
        phi=phi,
        grad_phi=grad_phi,
        edges=edges,
    )
