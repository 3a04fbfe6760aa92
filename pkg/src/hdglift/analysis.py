"""Error measurement, best-fit projections and convergence rates."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .forms import Discretization, local_a, local_j
from .lifting import apply_lifting_boundary, evaluate_field, liftings_from_tables, mass_matrix

logger = logging.getLogger(__name__)

# errors at or below this are roundoff; no rate is reported against them
RATE_FLOOR = 1e-10


@dataclass(frozen=True)
class ExactSolution:
    name: str
    value: Callable
    gradient: Callable  # returns (du/dx, du/dy)
    source: Callable  # -laplacian of value
    regularity: str = "smooth"


def _sin_sin():
    pi = np.pi
    return ExactSolution(
        name="sin-sin",
        value=lambda x, y: np.sin(pi * x) * np.sin(pi * y),
        gradient=lambda x, y: (
            pi * np.cos(pi * x) * np.sin(pi * y),
            pi * np.sin(pi * x) * np.cos(pi * y),
        ),
        source=lambda x, y: 2 * pi**2 * np.sin(pi * x) * np.sin(pi * y),
        regularity="analytic",
    )


def _biquartic():
    return ExactSolution(
        name="biquartic",
        value=lambda x, y: x * (1 - x) * y * (1 - y),
        gradient=lambda x, y: ((1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)),
        source=lambda x, y: 2 * (x * (1 - x) + y * (1 - y)),
        regularity="polynomial of total degree 4",
    )


def _zero():
    zero = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return ExactSolution(
        name="zero", value=zero, gradient=lambda x, y: (zero(x, y), zero(x, y)), source=zero,
        regularity="polynomial of degree 0",
    )


CASES: dict[str, ExactSolution] = {c.name: c for c in (_sin_sin(), _biquartic(), _zero())}


def get_case(name: str) -> ExactSolution:
    try:
        return CASES[name]
    except KeyError:
        raise ValueError(f"unknown solution case {name!r}; known: {sorted(CASES)}") from None


@dataclass
class DiscretePair:
    """An element field and a trace field on every edge (zero rows on the boundary)."""

    disc: Discretization
    u: np.ndarray  # (n_elements, n_u)
    traces: np.ndarray  # (n_edges, n_t)


def _local_traces(disc, traces, element):
    return [traces[eid] for eid, _ in disc.mesh.element_edges[element]]


def l2_error(pair, exact: ExactSolution | None = None) -> float:
    """L2 norm of ``u - u_h`` (of ``u_h`` alone when ``exact`` is None)."""
    disc = pair.disc
    total = 0.0
    for k in range(disc.mesh.n_elements):
        t = disc.rhs_tables(k)
        diff = t.phi @ pair.u[k]
        if exact is not None:
            diff = exact.value(t.points[:, 0], t.points[:, 1]) - diff
        total += float(t.weights @ diff**2)
    return math.sqrt(total)


def h1_broken_error(pair, exact: ExactSolution | None = None) -> float:
    """Broken H1 seminorm sqrt(sum_K |u - u_h|_{1,K}^2)."""
    disc = pair.disc
    total = 0.0
    for k in range(disc.mesh.n_elements):
        t = disc.rhs_tables(k)
        diff = np.einsum("qic,i->qc", t.grad_phi, pair.u[k])
        if exact is not None:
            diff = np.column_stack(exact.gradient(t.points[:, 0], t.points[:, 1])) - diff
        total += float(t.weights @ (diff**2).sum(axis=1))
    return math.sqrt(total)


def local_energy(tables, eta, u_coef, local_traces, exact: ExactSolution | None = None):
    """Squared per-element contributions ``(|||.|||_K^2, |||.|||_{h,K}^2)``.

    With ``exact`` given, the pair is the error (u - u_h, u - u_hat_h); its edge
    difference is u_hat_h - u_h, a polynomial, so lifting stays exact.
    """
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (len(tables.edges),))
    jumps = [et.phi @ u_coef - et.psi @ tr for et, tr in zip(tables.edges, local_traces)]
    grad = np.einsum("qic,i->qc", tables.grad_phi, u_coef)
    if exact is not None:
        jumps = [-j for j in jumps]
        grad = np.column_stack(exact.gradient(tables.points[:, 0], tables.points[:, 1])) - grad
    lift = apply_lifting_boundary(liftings_from_tables(tables), jumps)
    corrected = grad - evaluate_field(tables, lift)
    edge_term = sum(
        e / et.length * float(et.weights @ j**2) for e, et, j in zip(eta, tables.edges, jumps)
    )
    grad_sq = float(tables.weights @ (grad**2).sum(axis=1))
    corr_sq = float(tables.weights @ (corrected**2).sum(axis=1))
    return corr_sq + edge_term, grad_sq + edge_term


def energy_norms(pair, exact: ExactSolution | None = None) -> tuple[float, float]:
    """``(|||v|||, |||v|||_h)`` for a discrete pair, or for its error against ``exact``."""
    disc = pair.disc
    traces = pair.traces
    triple = triple_h = 0.0
    for k in range(disc.mesh.n_elements):
        a, b = local_energy(
            disc.rhs_tables(k), disc.local_eta(k), pair.u[k],
            _local_traces(disc, traces, k), exact,
        )
        triple += a
        triple_h += b
    return math.sqrt(triple), math.sqrt(triple_h)


def energy_error(pair, exact: ExactSolution) -> float:
    return energy_norms(pair, exact)[0]


def broken_norm_matrix(disc: Discretization):
    """Sparse Gram matrix of ``|||.|||_h`` over element and interior trace dofs.

    Ordered like :func:`hdglift.system.assemble_full`.
    """
    from .system import DofMap

    dofmap = DofMap.build(disc)
    rows, cols, vals = [], [], []
    for k in range(disc.mesh.n_elements):
        t = disc.tables(k)
        loc = local_j(t, disc.local_eta(k), lifting=False)
        loc[: disc.n_u, : disc.n_u] += local_a(t)
        glob = dofmap.local_full(k)
        keep = np.flatnonzero(glob >= 0)
        idx = glob[keep]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(loc[np.ix_(keep, keep)].ravel())
    n = dofmap.n_dofs
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsc()


def norm_equivalence_constant(disc: Discretization, tol: float = 1e-8) -> float:
    """Exact ``sup |||v||| / |||v|||_h`` over the discrete space.

    Square root of the largest eigenvalue of the pencil (B, H) with B the
    system matrix and H the Gram matrix of ``|||.|||_h``.
    """
    from .system import assemble_full

    mat = assemble_full(disc)[0].tocsc()
    gram = broken_norm_matrix(disc)
    lu = splu(gram)
    inv = LinearOperator(gram.shape, matvec=lu.solve, dtype=float)
    ncv = min(gram.shape[0] - 1, 96)
    lam = eigsh(mat, k=1, M=gram, Minv=inv, which="LA", ncv=ncv, tol=tol, return_eigenvectors=False)
    return math.sqrt(float(lam[0]))


def best_fit(exact: ExactSolution, disc: Discretization) -> DiscretePair:
    """Element-wise L2 projection onto U_h and edge-wise L2 projection onto the trace space."""
    mesh = disc.mesh
    u = np.zeros((mesh.n_elements, disc.n_u))
    traces = np.zeros((mesh.n_edges, disc.n_t))
    done = np.zeros(mesh.n_edges, dtype=bool)
    for k in range(mesh.n_elements):
        t = disc.rhs_tables(k)
        vals = exact.value(t.points[:, 0], t.points[:, 1])
        u[k] = linalg.solve(mass_matrix(t), t.phi.T @ (t.weights * vals), assume_a="pos")
        for et in t.edges:
            if done[et.edge] or mesh.edges[et.edge].boundary:
                continue
            gram = et.psi.T @ (et.weights[:, None] * et.psi)
            ev = exact.value(et.points[:, 0], et.points[:, 1])
            traces[et.edge] = linalg.solve(gram, et.psi.T @ (et.weights * ev), assume_a="pos")
            done[et.edge] = True
    return DiscretePair(disc, u, traces)


def rates(errors: Sequence[float], floor: float = RATE_FLOOR) -> list[float | None]:
    """Dyadic rates log2(e_i / e_{i+1}); the last entry is always None."""
    out: list[float | None] = []
    for a, b in zip(errors[:-1], errors[1:]):
        if a <= floor or b <= floor:
            logger.warning("no rate between errors %.3e and %.3e (at roundoff level)", a, b)
            out.append(None)
        else:
            out.append(math.log2(a / b))
    out.append(None)
    return out


CSV_COLUMNS = (
    "k", "N", "h", "trace_dofs",
    "l2_error", "l2_rate", "h1_error", "h1_rate", "energy_error", "energy_rate",
    "solver_iters", "solve_seconds",
)


@dataclass
class ErrorRow:
    k: int
    N: int
    h: float
    trace_dofs: int
    l2_error: float
    h1_error: float
    energy_error: float
    eta: float = 1.0
    solver_iters: int = 0
    solve_seconds: float | None = None
    best_fit_energy: float | None = None
    l2_rate: float | None = None
    h1_rate: float | None = None
    energy_rate: float | None = None


@dataclass
class ErrorTable:
    rows: list[ErrorRow] = field(default_factory=list)

    def append(self, row: ErrorRow) -> None:
        self.rows.append(row)

    def compute_rates(self) -> None:
        """Attach rates to runs of consecutive rows with equal (k, eta) and doubling N."""
        groups: list[list[ErrorRow]] = []
        for row in self.rows:
            last = groups[-1][-1] if groups else None
            if last is not None and (last.k, last.eta) == (row.k, row.eta) and row.N == 2 * last.N:
                groups[-1].append(row)
            else:
                groups.append([row])
        for grp in groups:
            for name in ("l2", "h1", "energy"):
                vals = rates([getattr(r, f"{name}_error") for r in grp])
                for r, v in zip(grp, vals):
                    setattr(r, f"{name}_rate", v)

    def to_csv(self, path=None, timings: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)

        def fmt(v):
            return "" if v is None else f"{v:.6e}" if isinstance(v, float) else str(v)

        for r in self.rows:
            rec = asdict(r)
            if not timings:
                rec["solve_seconds"] = None
            writer.writerow([fmt(rec[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_json(self, path=None, timings: bool = True) -> str:
        rows = [asdict(r) for r in self.rows]
        if not timings:
            for r in rows:
                r["solve_seconds"] = None
        text = json.dumps({"columns": list(CSV_COLUMNS) + ["eta", "best_fit_energy"], "rows": rows}, indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def format(self) -> str:
        """Console table grouped by degree, rates beside the coarser row."""

        def e(v):
            return f"{v:10.3e}"

        def r(v):
            return f"{v:6.2f}" if v is not None else " " * 6

        head = f"{'k':>2} {'N':>4} {'eta':>8} | {'L2':>10} {'rate':>6} | {'H1':>10} {'rate':>6} | {'energy':>10} {'rate':>6}"
        lines = [head, "-" * len(head)]
        prev = None
        for row in self.rows:
            key = (row.k, row.eta)
            if prev is not None and key != prev:
                lines.append("-" * len(head))
            k_txt = f"{row.k:>2}" if key != prev else "  "
            lines.append(
                f"{k_txt} {row.N:>4} {row.eta:8.1e} | {e(row.l2_error)} {r(row.l2_rate)} | "
                f"{e(row.h1_error)} {r(row.h1_rate)} | {e(row.energy_error)} {r(row.energy_rate)}"
            )
            prev = key
        return "\n".join(lines)
