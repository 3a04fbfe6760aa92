"""Global assembly, static condensation and solution of the discrete problem.

Element coefficients are eliminated element by element (Schur complement),
leaving a sparse SPD system in the trace coefficients of interior edges.
Boundary edges carry no unknowns, which imposes the homogeneous Dirichlet
condition exactly.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse.linalg import spsolve

from .forms import Discretization, LocalBlock, local_system

logger = logging.getLogger(__name__)

DENSE_DOF_CAP = 5000
DIRECT_MAX_N = 64


class CondensationError(RuntimeError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, residual_history=()):
        super().__init__(message)
        self.residual_history = list(residual_history)


@dataclass(frozen=True)
class DofMap:
    n_elements: int
    n_u: int
    n_t: int
    # trace numbering offset per edge, -1 on boundary edges
    trace_offset: np.ndarray
    element_edges: tuple

    @classmethod
    def build(cls, disc: Discretization) -> "DofMap":
        mesh = disc.mesh
        offset = np.full(mesh.n_edges, -1, dtype=np.int64)
        for i, eid in enumerate(mesh.interior_edges):
            offset[eid] = i * disc.n_t
        return cls(mesh.n_elements, disc.n_u, disc.n_t, offset, mesh.element_edges)

    @property
    def n_element_dofs(self) -> int:
        return self.n_elements * self.n_u

    @property
    def n_trace_dofs(self) -> int:
        return int((self.trace_offset >= 0).sum()) * self.n_t

    @property
    def n_dofs(self) -> int:
        return self.n_element_dofs + self.n_trace_dofs

    def element_dofs(self, element: int) -> np.ndarray:
        return np.arange(element * self.n_u, (element + 1) * self.n_u)

    def local_traces(self, element: int) -> np.ndarray:
        """Trace-numbering index of every local trace slot, -1 where pinned to zero."""
        out = np.full(len(self.element_edges[element]) * self.n_t, -1, dtype=np.int64)
        for m, (eid, _) in enumerate(self.element_edges[element]):
            start = self.trace_offset[eid]
            if start >= 0:
                out[m * self.n_t : (m + 1) * self.n_t] = np.arange(start, start + self.n_t)
        return out

    def local_full(self, element: int) -> np.ndarray:
        """Full-numbering index of every local slot, -1 where pinned to zero."""
        tr = self.local_traces(element)
        tr = np.where(tr >= 0, tr + self.n_element_dofs, -1)
        return np.concatenate([self.element_dofs(element), tr])

    def join(self, u: np.ndarray, uhat: np.ndarray) -> np.ndarray:
        return np.concatenate([np.ravel(u), np.ravel(uhat)])

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x)
        return x[: self.n_element_dofs].reshape(self.n_elements, self.n_u), x[self.n_element_dofs :]

    def traces_by_edge(self, uhat: np.ndarray) -> np.ndarray:
        """Trace coefficients (n_edges, n_t); zero rows on boundary edges."""
        out = np.zeros((len(self.trace_offset), self.n_t))
        interior = self.trace_offset >= 0
        out[interior] = np.asarray(uhat).reshape(-1, self.n_t)
        return out

    def traces_from_edges(self, by_edge: np.ndarray) -> np.ndarray:
        return np.asarray(by_edge)[self.trace_offset >= 0].ravel().copy()


@dataclass
class Recovery:
    element: int
    factor: tuple
    coupling: np.ndarray  # K_ut restricted to free traces
    load: np.ndarray
    traces: np.ndarray  # trace-numbering indices of the free local slots

    def recover(self, uhat: np.ndarray) -> np.ndarray:
        rhs = self.load - self.coupling @ uhat[self.traces]
        return linalg.cho_solve(self.factor, rhs)


def condense(block: LocalBlock, traces: np.ndarray | None = None):
    """Eliminate element coefficients from a local block.

    ``traces`` gives the trace-numbering index of each local trace slot, -1
    for slots pinned to zero (boundary edges). Returns ``(S_K, g_K, recovery)``
    over the free slots.
    """
    n_u = block.n_u
    mat = block.matrix
    if traces is None:
        traces = np.arange(mat.shape[0] - n_u)
    free = np.flatnonzero(traces >= 0) + n_u
    k_uu = mat[:n_u, :n_u]
    k_ut = mat[:n_u, free]
    k_tt = mat[np.ix_(free, free)]
    f_u = block.load[:n_u]
    try:
        factor = linalg.cho_factor(k_uu)
    except linalg.LinAlgError as exc:
        raise CondensationError(
            f"element block of element {block.element} is not positive definite"
        ) from exc
    x = linalg.cho_solve(factor, np.column_stack([k_ut, f_u]))
    s_k = k_tt - k_ut.T @ x[:, :-1]
    g_k = -k_ut.T @ x[:, -1]
    rec = Recovery(block.element, factor, k_ut, f_u, traces[traces >= 0])
    return s_k, g_k, rec


@dataclass
class CondensedSystem:
    disc: Discretization
    dofmap: DofMap
    matrix: sp.csr_matrix
    rhs: np.ndarray
    recoveries: list[Recovery]

    def dump(self, matrix_path, rhs_path) -> None:
        """Write the matrix as ``row col value`` lines and the right side one value per line."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(matrix_path, "w") as fh:
            fh.write(f"# {self.matrix.shape[0]} {self.matrix.shape[1]} {len(order)}\n")
            for i in order:
                fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}\n")
        np.savetxt(rhs_path, self.rhs, fmt="%.17g")


def assemble(disc: Discretization, f: Callable | None = None) -> CondensedSystem:
    dofmap = DofMap.build(disc)
    rows, cols, vals = [], [], []
    rhs = np.zeros(dofmap.n_trace_dofs)
    recoveries = []
    for k in range(disc.mesh.n_elements):
        traces = dofmap.local_traces(k)
        s_k, g_k, rec = condense(local_system(disc, k, f), traces)
        idx = rec.traces
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(s_k.ravel())
        np.add.at(rhs, idx, g_k)
        recoveries.append(rec)
    n = dofmap.n_trace_dofs
    if rows:
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
    else:
        mat = sp.csr_matrix((n, n))
    return CondensedSystem(disc, dofmap, mat, rhs, recoveries)


def assemble_full(disc: Discretization, f: Callable | None = None):
    """Uncondensed matrix and load over all element and interior trace dofs."""
    dofmap = DofMap.build(disc)
    rows, cols, vals = [], [], []
    rhs = np.zeros(dofmap.n_dofs)
    for k in range(disc.mesh.n_elements):
        block = local_system(disc, k, f)
        glob = dofmap.local_full(k)
        keep = np.flatnonzero(glob >= 0)
        idx = glob[keep]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(block.matrix[np.ix_(keep, keep)].ravel())
        np.add.at(rhs, idx, block.load[keep])
    n = dofmap.n_dofs
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return mat, rhs, dofmap


@dataclass
class Solution:
    disc: Discretization
    dofmap: DofMap
    u: np.ndarray  # (n_elements, n_u)
    uhat: np.ndarray  # (n_trace_dofs,)
    method: str = "direct"
    iterations: int = 0
    residual: float = 0.0
    residual_history: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def traces(self) -> np.ndarray:
        return self.dofmap.traces_by_edge(self.uhat)

    @property
    def vector(self) -> np.ndarray:
        return self.dofmap.join(self.u, self.uhat)


def conjugate_gradient(A, b, rel_tol=1e-12, max_iter=None, x0=None):
    """Jacobi-preconditioned CG. Returns ``(x, iterations, residual_history)``."""
    n = len(b)
    max_iter = 20 * max(n, 1) if max_iter is None else max_iter
    b_norm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if b_norm == 0.0:
        return np.zeros(n), 0, [0.0]
    inv_diag = 1.0 / A.diagonal()
    r = b - A @ x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / b_norm]
    for it in range(1, max_iter + 1):
        ap = A @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        history.append(np.linalg.norm(r) / b_norm)
        if history[-1] <= rel_tol:
            return x, it, history
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not reach relative residual {rel_tol:g} in {max_iter} iterations "
        f"(last {history[-1]:.3e})",
        history,
    )


def solve(system: CondensedSystem, method: str = "auto", rel_tol: float = 1e-12) -> Solution:
    """Solve the condensed system and recover element coefficients.

    ``method`` is ``"direct"``, ``"cg"`` or ``"auto"`` (direct up to N = 64
    elements per direction, CG above).
    """
    if method == "auto":
        n_side = int(round(np.sqrt(system.dofmap.n_elements)))
        method = "direct" if n_side <= DIRECT_MAX_N else "cg"
    start = time.perf_counter()
    mat, rhs = system.matrix, system.rhs
    iterations, history = 0, []
    if len(rhs) == 0 or not np.any(rhs):
        uhat = np.zeros(len(rhs))
    elif method == "direct":
        uhat = np.atleast_1d(spsolve(mat.tocsc(), rhs))
    elif method == "cg":
        uhat, iterations, history = conjugate_gradient(mat, rhs, rel_tol)
    else:
        raise ValueError(f"unknown solver {method!r}")
    if not np.all(np.isfinite(uhat)):
        raise SolverError(f"{method} solve produced non-finite trace values")
    rhs_norm = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(rhs - mat @ uhat) / rhs_norm) if rhs_norm > 0 else 0.0
    u = np.array([rec.recover(uhat) for rec in system.recoveries])
    elapsed = time.perf_counter() - start
    logger.debug("solved %d trace dofs with %s in %.3fs", len(rhs), method, elapsed)
    return Solution(
        system.disc, system.dofmap, u, uhat, method, iterations, residual, history, elapsed
    )


def solve_full(disc: Discretization, f: Callable | None = None, dof_cap: int = DENSE_DOF_CAP) -> Solution:
    """Dense solve of the uncondensed system; reference path for small meshes."""
    dofmap = DofMap.build(disc)
    if dofmap.n_dofs > dof_cap:
        raise ValueError(f"{dofmap.n_dofs} dofs exceed the dense cap of {dof_cap}")
    start = time.perf_counter()
    mat, rhs, dofmap = assemble_full(disc, f)
    x = linalg.solve(mat.toarray(), rhs, assume_a="pos")
    u, uhat = dofmap.split(x)
    return Solution(disc, dofmap, u, uhat, "dense-full", seconds=time.perf_counter() - start)
