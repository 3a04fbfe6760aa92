"""Element-local blocks of the lifting-stabilized hybridized DG bilinear form.

Local layout: the n_u element coefficients come first, followed by the n_t
trace coefficients of each incident edge in the mesh's local edge order.
Boundary-edge trace slots exist locally and are dropped during assembly.

A pair v = (v, v_hat) has quadratic form

    a(v, v) + 2 b(v, v) + j(v, v)
        = ||grad v - L_dK(v - v_hat)||_K^2 + sum_e eta_e / h_e ||v - v_hat||_e^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import ElementTables, edge_basis, element_basis, tabulate_element
from .lifting import liftings_from_tables, mass_matrix
from .mesh import Mesh

SCHEMES = ("lifting", "edge-penalty-only")


@dataclass
class Discretization:
    mesh: Mesh
    degree: int
    eta: float | np.ndarray = 1.0
    quad_order: int | None = None
    rhs_quad_order: int | None = None
    scheme: str = "lifting"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.ebasis = element_basis(self.degree)
        self.tbasis = edge_basis(self.degree)
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim == 0:
            eta = np.full(self.mesh.n_edges, float(eta))
        if eta.shape != (self.mesh.n_edges,):
            raise ValueError(f"per-edge eta needs {self.mesh.n_edges} entries, got {eta.shape}")
        if not np.all(eta > 0):
            raise ValueError("penalty parameters must be strictly positive")
        self.edge_eta = eta
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        self.quad_order = self.quad_order or self.degree + 2
        self.rhs_quad_order = self.rhs_quad_order or self.degree + 3

    @property
    def n_u(self) -> int:
        return self.ebasis.dim

    @property
    def n_t(self) -> int:
        return self.tbasis.dim

    @property
    def n_loc(self) -> int:
        return self.n_u + 4 * self.n_t

    def tables(self, element: int, q: int | None = None) -> ElementTables:
        q = q or self.quad_order
        key = ("tables", element, q)
        if key not in self._cache:
            self._cache[key] = tabulate_element(self.mesh, element, self.ebasis, self.tbasis, q)
        return self._cache[key]

    def rhs_tables(self, element: int) -> ElementTables:
        return self.tables(element, self.rhs_quad_order)

    def local_eta(self, element: int) -> np.ndarray:
        return self.edge_eta[[eid for eid, _ in self.mesh.element_edges[element]]]

    def trace_slice(self, local_edge: int) -> slice:
        start = self.n_u + local_edge * self.n_t
        return slice(start, start + self.n_t)


@dataclass
class LocalBlock:
    element: int
    n_u: int
    n_t: int
    matrix: np.ndarray
    load: np.ndarray

    @property
    def n_edges(self) -> int:
        return (len(self.load) - self.n_u) // self.n_t


def jump_matrices(tables: ElementTables) -> list[np.ndarray]:
    """Per local edge, the map from local coefficients to samples of v - v_hat."""
    n_u = tables.n_u
    n_t = tables.edges[0].psi.shape[1]
    n_loc = n_u + len(tables.edges) * n_t
    out = []
    for m, et in enumerate(tables.edges):
        jm = np.zeros((len(et.weights), n_loc))
        jm[:, :n_u] = et.phi
        jm[:, n_u + m * n_t : n_u + (m + 1) * n_t] = -et.psi
        out.append(jm)
    return out


def lifting_operator(tables: ElementTables) -> np.ndarray:
    """Coefficients (2, n_u, n_loc) of L_dK(v - v_hat) as a linear map of the local vector."""
    maps = liftings_from_tables(tables)
    return sum(lm.matrix @ jm for lm, jm in zip(maps, jump_matrices(tables)))


def local_a(tables: ElementTables) -> np.ndarray:
    g = tables.grad_phi
    w = tables.weights
    return np.einsum("q,qic,qjc->ij", w, g, g)


def local_b(tables: ElementTables) -> np.ndarray:
    """Face-integral form: ``b(u, v) = u_elem @ B @ v_local`` with ``B`` of shape (n_u, n_loc)."""
    out = 0.0
    for et, jm in zip(tables.edges, jump_matrices(tables)):
        flux = et.grad_phi @ et.normal  # (nq, n_u)
        out = out - flux.T @ (et.weights[:, None] * jm)
    return out


def local_b_lifted(tables: ElementTables) -> np.ndarray:
    """Same form via ``b(u, v) = -(grad u, L_dK(v - v_hat))_K``; used as a cross-check."""
    lift = lifting_operator(tables)
    w = tables.weights
    out = 0.0
    for c in range(2):
        gram = np.einsum("q,qi,qj->ij", w, tables.grad_phi[:, :, c], tables.phi)
        out = out - gram @ lift[c]
    return out


def local_j(tables: ElementTables, eta, lifting: bool = True) -> np.ndarray:
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (len(tables.edges),))
    if not np.all(eta > 0):
        raise ValueError("penalty parameters must be strictly positive")
    jms = jump_matrices(tables)
    n_loc = jms[0].shape[1]
    out = np.zeros((n_loc, n_loc))
    if lifting:
        lift = lifting_operator(tables)
        mass = mass_matrix(tables)
        for c in range(2):
            out += lift[c].T @ mass @ lift[c]
    for et, jm, eta_e in zip(tables.edges, jms, eta):
        out += (eta_e / et.length) * jm.T @ (et.weights[:, None] * jm)
    return out


def local_load(tables: ElementTables, f: Callable, n_loc: int) -> np.ndarray:
    vals = np.asarray(f(tables.points[:, 0], tables.points[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, tables.weights.shape)
    out = np.zeros(n_loc)
    out[: tables.n_u] = tables.phi.T @ (tables.weights * vals)
    return out


def local_system(disc: Discretization, element: int, f: Callable | None = None) -> LocalBlock:
    tables = disc.tables(element)
    n_u = disc.n_u
    a = np.zeros((disc.n_loc, disc.n_loc))
    a[:n_u, :n_u] = local_a(tables)
    b = np.zeros_like(a)
    b[:n_u, :] = local_b(tables)
    j = local_j(tables, disc.local_eta(element), lifting=disc.scheme == "lifting")
    mat = a + b + b.T + j
    if f is None:
        load = np.zeros(disc.n_loc)
    else:
        load = local_load(disc.rhs_tables(element), f, disc.n_loc)
    return LocalBlock(element=element, n_u=n_u, n_t=disc.n_t, matrix=mat, load=load)
