"""Element-local lifting of edge data into vector polynomial fields.

For an element K with edge e, the lifting of g in L2(e) is the field L in
U_h(K)^2 with (L, w)_K = <g, w . n_K>_e for all w in U_h(K)^2. Inputs are
given as samples at the edge quadrature points of an :class:`ElementTables`,
so polynomial jumps and traces of exact solutions share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .basis import ElementTables, edge_basis, element_basis, tabulate_element


def mass_matrix(tables: ElementTables) -> np.ndarray:
    return tables.phi.T @ (tables.weights[:, None] * tables.phi)


@dataclass(frozen=True)
class LiftingMap:
    element: int
    edge: int
    # (2, n_u, nq): component, coefficient, edge quadrature sample
    matrix: np.ndarray

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        """Coefficients (2, n_u) of the lifted field."""
        samples = np.asarray(samples, dtype=float)
        if samples.shape != (self.matrix.shape[2],):
            raise ValueError(
                f"expected {self.matrix.shape[2]} edge samples, got shape {samples.shape}"
            )
        return self.matrix @ samples


def liftings_from_tables(tables: ElementTables, mass=None) -> list[LiftingMap]:
    """One lifting map per incident edge, in local edge order."""
    if mass is None:
        mass = mass_matrix(tables)
    try:
        factor = linalg.cho_factor(mass)
    except linalg.LinAlgError as exc:  # pragma: no cover - cannot happen for a valid basis
        raise AssertionError(f"singular element mass matrix on element {tables.element}") from exc
    maps = []
    for et in tables.edges:
        # moments <g, phi_j n_c>_e for each sample of g
        moments = et.phi.T * et.weights[None, :]
        base = linalg.cho_solve(factor, moments)
        maps.append(
            LiftingMap(
                element=tables.element,
                edge=et.edge,
                matrix=np.stack([et.normal[0] * base, et.normal[1] * base]),
            )
        )
    return maps


def build_lifting(mesh, element: int, edge: int, k: int, q: int | None = None) -> LiftingMap:
    """Lifting map of ``edge`` into ``element`` for degree ``k`` (q Gauss points per direction)."""
    ids = [eid for eid, _ in mesh.element_edges[element]]
    if edge not in ids:
        raise ValueError(f"edge {edge} is not incident to element {element}")
    tables = tabulate_element(mesh, element, element_basis(k), edge_basis(k), q or k + 2)
    return liftings_from_tables(tables)[ids.index(edge)]


def apply_lifting_boundary(maps: list[LiftingMap], samples: list[np.ndarray]) -> np.ndarray:
    """Sum of the per-edge liftings, i.e. the boundary lifting of the given edge data."""
    if len(maps) != len(samples):
        raise ValueError(f"got {len(samples)} sample arrays for {len(maps)} edges")
    return sum(m(s) for m, s in zip(maps, samples))


def evaluate_field(tables: ElementTables, coef: np.ndarray, phi=None) -> np.ndarray:
    """Values (nq, 2) of a vector field with coefficients (2, n_u)."""
    phi = tables.phi if phi is None else phi
    return phi @ coef.T


def lifting_stability_ratio(tables: ElementTables, local_edge: int) -> float:
    """Best constant C in ||L(g)||_K <= C h_e^{-1/2} ||g||_e over g in P_k(e).

    Edge traces of P_k element functions are again P_k on the edge, so the
    trace space is the whole discrete input span.
    """
    maps = liftings_from_tables(tables)
    et = tables.edges[local_edge]
    lift = maps[local_edge].matrix @ et.psi  # (2, n_u, n_t)
    mass = mass_matrix(tables)
    num = sum(lift[c].T @ mass @ lift[c] for c in range(2))
    den = et.psi.T @ (et.weights[:, None] * et.psi) / et.length
    top = linalg.eigh(num, den, eigvals_only=True)[-1]
    return float(np.sqrt(max(top, 0.0)))
