"""Convergence-study driver and command line interface.

Exit codes: 0 on success, 1 for configuration errors, 2 when a solve fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    CASES,
    ErrorRow,
    ErrorTable,
    best_fit,
    energy_error,
    get_case,
    h1_broken_error,
    l2_error,
)
from .basis import RectangleMap
from .forms import SCHEMES, Discretization
from .mesh import build_uniform_rect
from .system import CondensationError, SolverError, assemble, solve

logger = logging.getLogger("hdglift")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVE = 0, 1, 2


class ConfigError(ValueError):
    pass


class StudyError(RuntimeError):
    pass


@dataclass
class StudyConfig:
    degrees: list[int] = field(default_factory=lambda: [1, 2, 3])
    mesh_sizes: list[int] = field(default_factory=lambda: [4, 8, 16, 32])
    eta: list[float] = field(default_factory=lambda: [1.0])
    case: str = "sin-sin"
    solver: str = "auto"
    rel_tol: float = 1e-12
    quad_order: int | None = None
    rhs_quad_order: int | None = None
    scheme: str = "lifting"
    out_csv: str | None = None
    out_json: str | None = None
    dump_fields: str | None = None
    dump_matrix: str | None = None
    dump_mesh: str | None = None
    samples_per_element: int | None = None
    timings: bool = True

    def __post_init__(self):
        if isinstance(self.eta, (int, float)):
            self.eta = [float(self.eta)]
        self.validate()

    def validate(self) -> None:
        if not self.degrees or any(int(k) != k or not 1 <= k <= 8 for k in self.degrees):
            raise ConfigError(f"degrees must be integers in [1, 8], got {self.degrees}")
        if not self.mesh_sizes or any(int(n) != n or n < 1 for n in self.mesh_sizes):
            raise ConfigError(f"mesh sizes must be positive integers, got {self.mesh_sizes}")
        if not self.eta or any(not (e > 0 and math.isfinite(e)) for e in self.eta):
            raise ConfigError(f"penalty parameters must be positive, got {self.eta}")
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; known: {sorted(CASES)}")
        if self.solver not in ("auto", "direct", "cg"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")
        for name in ("quad_order", "rhs_quad_order", "samples_per_element"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def cells(self):
        return [(k, n, e) for k in self.degrees for e in self.eta for n in self.mesh_sizes]


def _cell_path(template: str | None, cell, multi: bool) -> Path | None:
    if template is None:
        return None
    path = Path(template)
    if not multi:
        return path
    k, n, eta = cell
    return path.with_name(f"{path.stem}-k{k}-N{n}-eta{eta:g}{path.suffix}")


def dump_fields(solution, path, samples_per_element: int | None = None) -> None:
    """Write element samples (element x y u_h) and interior-edge trace samples (edge x y uhat_h).

    The two blocks are separated by two blank lines; lines starting with ``#``
    are comments.
    """
    disc = solution.disc
    mesh = disc.mesh
    if samples_per_element is None:
        side = disc.degree + 2
    else:
        side = int(round(math.sqrt(samples_per_element)))
        if side * side != samples_per_element:
            raise ValueError("samples_per_element must be a perfect square")
    s = np.linspace(0.0, 1.0, side)
    X, Y = np.meshgrid(s, s, indexing="ij")
    ref = np.column_stack([X.ravel(), Y.ravel()])
    phi, _ = disc.ebasis.tabulate(ref)
    psi = disc.tbasis.values(s)
    traces = solution.traces
    with open(path, "w") as fh:
        fh.write(f"# hdglift field samples k={disc.degree} elements={mesh.n_elements}\n")
        fh.write("# element x y u_h\n")
        for k in range(mesh.n_elements):
            pts = RectangleMap(*mesh.element_box(k)).to_physical(ref)
            vals = phi @ solution.u[k]
            for (x, y), v in zip(pts, vals):
                fh.write(f"{k} {x:.12g} {y:.12g} {v:.12g}\n")
        fh.write("\n\n# edge x y uhat_h\n")
        for eid in mesh.interior_edges:
            pts = mesh.edge_points(eid, s)
            vals = psi @ traces[eid]
            for (x, y), v in zip(pts, vals):
                fh.write(f"{eid} {x:.12g} {y:.12g} {v:.12g}\n")


def read_field_dump(path):
    """Parse a field dump back into ``(element_samples, trace_samples)`` arrays."""
    blocks, current = [], []
    blank = 0
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            blank += 1
            if blank == 2:
                blocks.append(current)
                current = []
            continue
        blank = 0
        if not line.startswith("#"):
            current.append([float(v) for v in line.split()])
    blocks.append(current)
    return tuple(np.array(b).reshape(-1, 4) for b in blocks)


def run_cell(config: StudyConfig, k: int, n: int, eta: float):
    exact = get_case(config.case)
    mesh = build_uniform_rect(n, n)
    disc = Discretization(
        mesh, k, eta=eta, quad_order=config.quad_order,
        rhs_quad_order=config.rhs_quad_order, scheme=config.scheme,
    )
    system = assemble(disc, exact.source)
    solution = solve(system, config.solver, config.rel_tol)
    row = ErrorRow(
        k=k, N=n, h=1.0 / n, trace_dofs=system.dofmap.n_trace_dofs,
        l2_error=l2_error(solution, exact),
        h1_error=h1_broken_error(solution, exact),
        energy_error=energy_error(solution, exact),
        eta=float(eta),
        solver_iters=solution.iterations,
        solve_seconds=solution.seconds,
        best_fit_energy=energy_error(best_fit(exact, disc), exact),
    )
    return row, system, solution


def run_study(config: StudyConfig, echo=None) -> ErrorTable:
    """Run every (k, N, eta) cell in config order and write the requested outputs.

    Raises :class:`StudyError` naming the failing cells after all others ran.
    """
    table = ErrorTable()
    failures = []
    cells = config.cells
    multi = len(cells) > 1
    for cell in cells:
        k, n, eta = cell
        try:
            row, system, solution = run_cell(config, k, n, eta)
        except (CondensationError, SolverError, np.linalg.LinAlgError, ArithmeticError) as exc:
            logger.error("solve failed for (k=%d, N=%d, eta=%g): %s", k, n, eta, exc)
            failures.append((cell, exc))
            continue
        table.append(row)
        if config.dump_mesh:
            system.disc.mesh.dump_json(_cell_path(config.dump_mesh, cell, multi))
        if config.dump_matrix:
            base = _cell_path(config.dump_matrix, cell, multi)
            system.dump(base.with_name(base.name + ".mtx.txt"), base.with_name(base.name + ".rhs.txt"))
        if config.dump_fields:
            dump_fields(solution, _cell_path(config.dump_fields, cell, multi), config.samples_per_element)
    table.compute_rates()
    if config.out_csv:
        table.to_csv(config.out_csv, timings=config.timings)
    if config.out_json:
        table.to_json(config.out_json, timings=config.timings)
    if echo is not None:
        echo(table.format())
    if failures:
        names = ", ".join(f"(k={k}, N={n}, eta={e:g})" for (k, n, e), _ in failures)
        raise StudyError(f"solve failed for {names}")
    return table


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: configuration error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="hdglift",
        description="Convergence studies for the lifting-stabilized hybridized DG Poisson solver "
        "on uniform meshes of the unit square.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON file with study settings; flags override it")
    p.add_argument("--degrees", type=int, nargs="+")
    p.add_argument("--mesh-sizes", type=int, nargs="+", help="elements per direction")
    p.add_argument("--eta", type=float, nargs="+", help="penalty parameter(s)")
    p.add_argument("--case", choices=sorted(CASES))
    p.add_argument("--solver", choices=("auto", "direct", "cg"))
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--quad-order", type=int, help="Gauss points per direction for bilinear forms")
    p.add_argument("--rhs-quad-order", type=int, help="Gauss points for load and error integrals")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.add_argument("--dump-fields", help="columnar text with u_h and uhat_h samples")
    p.add_argument("--samples-per-element", type=int)
    p.add_argument("--dump-matrix", help="path prefix for the condensed matrix and right side")
    p.add_argument("--dump-mesh", help="mesh as JSON")
    p.add_argument("--no-timings", dest="timings", action="store_false", default=None,
                   help="leave solve_seconds empty so outputs are byte-reproducible")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> StudyConfig:
    settings = {}
    if args.config:
        try:
            settings = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        known = {f.name for f in fields(StudyConfig)}
        unknown = set(settings) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for f in fields(StudyConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            settings[f.name] = v
    try:
        return StudyConfig(**settings)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        config = config_from_args(args)
    except (ConfigError, ValueError) as exc:
        print(f"hdglift: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_study(config, echo=None if args.quiet else print)
    except StudyError as exc:
        print(f"hdglift: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
