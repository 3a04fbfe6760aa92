import csv
import io
import json
import math

import numpy as np
import pytest
from scipy import linalg
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from hdglift.analysis import (
    CASES,
    CSV_COLUMNS,
    DiscretePair,
    ErrorRow,
    ErrorTable,
    best_fit,
    broken_norm_matrix,
    energy_norms,
    get_case,
    h1_broken_error,
    l2_error,
    norm_equivalence_constant,
    rates,
)
from hdglift.forms import Discretization
from hdglift.mesh import build_uniform_rect
from hdglift.system import assemble_full

from conftest import random_pair

X, Y = sp.symbols("x y")
SYMBOLIC = {
    "sin-sin": sp.sin(sp.pi * X) * sp.sin(sp.pi * Y),
    "biquartic": X * (1 - X) * Y * (1 - Y),
    "zero": sp.Integer(0),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_cases_match_symbolic_pairs(name, rng):
    case = get_case(name)
    u = SYMBOLIC[name]
    f = sp.lambdify((X, Y), -sp.diff(u, X, 2) - sp.diff(u, Y, 2), "numpy")
    gx = sp.lambdify((X, Y), sp.diff(u, X), "numpy")
    gy = sp.lambdify((X, Y), sp.diff(u, Y), "numpy")
    x, y = rng.uniform(size=(2, 50))
    assert np.allclose(case.source(x, y), f(x, y) + 0 * x, atol=1e-10)
    gcx, gcy = case.gradient(x, y)
    assert np.allclose(gcx, gx(x, y) + 0 * x, atol=1e-12)
    assert np.allclose(gcy, gy(x, y) + 0 * x, atol=1e-12)


def test_unknown_case():
    with pytest.raises(ValueError):
        get_case("nope")


def zero_pair(disc):
    return DiscretePair(disc, np.zeros((disc.mesh.n_elements, disc.n_u)), np.zeros((disc.mesh.n_edges, disc.n_t)))


def test_errors_of_zero_field():
    disc = Discretization(build_uniform_rect(4, 4), 1)
    case = get_case("sin-sin")
    assert l2_error(zero_pair(disc), case) == pytest.approx(0.5, rel=1e-6)
    assert h1_broken_error(zero_pair(disc), case) == pytest.approx(math.pi / math.sqrt(2), rel=1e-6)


@pytest.mark.parametrize("n", [1, 3])
def test_projection_of_representable_solution(n):
    disc = Discretization(build_uniform_rect(n, n), 4)
    case = get_case("biquartic")
    pair = best_fit(case, disc)
    assert l2_error(pair, case) <= 1e-10
    assert h1_broken_error(pair, case) <= 1e-10
    assert energy_norms(pair, case)[0] <= 1e-10


def test_best_fit_is_orthogonal():
    disc = Discretization(build_uniform_rect(3, 3), 2)
    case = get_case("sin-sin")
    pair = best_fit(case, disc)
    for k in range(disc.mesh.n_elements):
        t = disc.rhs_tables(k)
        resid = case.value(*t.points.T) - t.phi @ pair.u[k]
        assert np.abs(t.phi.T @ (t.weights * resid)).max() <= 1e-12
        for et in t.edges:
            if disc.mesh.edges[et.edge].boundary:
                assert np.all(pair.traces[et.edge] == 0)
                continue
            resid = case.value(*et.points.T) - et.psi @ pair.traces[et.edge]
            assert np.abs(et.psi.T @ (et.weights * resid)).max() <= 1e-12


def test_constant_edge_projection():
    disc = Discretization(build_uniform_rect(2, 2), 3)
    const = get_case("zero")
    shifted = type(const)("const", lambda x, y: 0 * x + 2.5, const.gradient, const.source)
    pair = best_fit(shifted, disc)
    for eid in disc.mesh.interior_edges:
        assert pair.traces[eid] == pytest.approx([2.5, 0, 0, 0], abs=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_projection_rate(k):
    case = get_case("sin-sin")
    errs = [l2_error(best_fit(case, Discretization(build_uniform_rect(n, n), k)), case) for n in (4, 8, 16, 32)]
    for r in rates(errs)[:-1]:
        assert abs(r - (k + 1)) <= 0.1


def test_energy_without_jumps():
    # a globally smooth quadratic paired with its own edge traces has no jumps
    disc = Discretization(build_uniform_rect(2, 2), 2)
    quad = type(get_case("zero"))("quad", lambda x, y: x * (1 - x) + 0 * y, None, None)
    u = best_fit(quad, disc).u
    triple, triple_h = energy_norms(DiscretePair(disc, u, _exact_traces(disc, quad)))
    grad_sq = h1_broken_error(DiscretePair(disc, u, None)) ** 2
    assert triple**2 == pytest.approx(grad_sq, rel=1e-12)
    assert triple_h**2 == pytest.approx(grad_sq, rel=1e-12)


def _exact_traces(disc, case):
    out = np.zeros((disc.mesh.n_edges, disc.n_t))
    for k in range(disc.mesh.n_elements):
        for et in disc.tables(k).edges:
            vals = case.value(*et.points.T)
            out[et.edge] = np.linalg.lstsq(et.psi, vals, rcond=None)[0]
    return out


def test_energy_single_edge_pair():
    disc = Discretization(build_uniform_rect(1, 1), 1)
    traces = np.zeros((4, 2))
    traces[1] = [-1.0, 0.0]  # edge id 1 is the right edge of the single element
    triple, triple_h = energy_norms(DiscretePair(disc, np.zeros((1, 3)), traces))
    assert triple**2 == pytest.approx(5.0, rel=1e-13)
    assert triple_h**2 == pytest.approx(1.0, rel=1e-13)


@pytest.mark.parametrize("k", [1, 3])
def test_coercivity_identity_and_boundedness(k, rng):
    disc = Discretization(build_uniform_rect(3, 3), k, eta=0.3)
    mat = assemble_full(disc)[0]
    for _ in range(30):
        pv, v = random_pair(disc, rng)
        pw, w = random_pair(disc, rng)
        nv, nw = energy_norms(pv)[0], energy_norms(pw)[0]
        assert abs(v @ mat @ v - nv**2) <= 1e-10 * nv**2
        assert abs(w @ mat @ v) <= nv * nw * (1 + 1e-10)


def test_rate_examples():
    assert rates([3.23e-2, 8.29e-3])[0] == pytest.approx(1.96, abs=1e-2)
    # printed inputs are rounded to three digits, so compare at display precision
    assert rates([4.48e-4, 2.43e-5])[0] == pytest.approx(4.21, abs=1e-2)
    assert rates([0.3, 0.15]) == [1.0, None]


def test_rates_absent_at_roundoff(caplog):
    assert rates([0.0, 0.0, 1e-14]) == [None, None, None]
    assert "roundoff" in caplog.text


@given(st.lists(st.floats(1e-8, 1e3), min_size=2, max_size=6))
def test_rates_property(errs):
    out = rates(errs)
    assert len(out) == len(errs) and out[-1] is None
    for r, a, b in zip(out, errs, errs[1:]):
        assert r == pytest.approx(math.log2(a / b))


def _table():
    t = ErrorTable()
    for n, e in [(4, 0.4), (8, 0.1), (16, 0.025)]:
        t.append(ErrorRow(k=1, N=n, h=1 / n, trace_dofs=n, l2_error=e, h1_error=2 * e, energy_error=e, solve_seconds=0.5))
    t.append(ErrorRow(k=2, N=4, h=0.25, trace_dofs=1, l2_error=1.0, h1_error=1.0, energy_error=1.0))
    t.compute_rates()
    return t


def test_table_rates_layout():
    t = _table()
    assert [r.l2_rate for r in t.rows] == [pytest.approx(2.0), pytest.approx(2.0), None, None]


def test_csv_and_json():
    t = _table()
    rows = list(csv.reader(io.StringIO(t.to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[3][CSV_COLUMNS.index("l2_rate")] == ""
    assert float(rows[1][CSV_COLUMNS.index("l2_rate")]) == pytest.approx(2.0)
    assert rows[1][-1] != ""
    assert list(csv.reader(io.StringIO(t.to_csv(timings=False))))[1][-1] == ""
    data = json.loads(t.to_json())
    assert len(data["rows"]) == 4 and data["rows"][0]["eta"] == 1.0
    assert "k" in t.format()


@pytest.mark.parametrize("k", [1, 2])
def test_norm_equivalence_constant_matches_dense_eigensolve(k):
    disc = Discretization(build_uniform_rect(3, 3), k, eta=2.0)
    mat = assemble_full(disc)[0].toarray()
    gram = broken_norm_matrix(disc).toarray()
    lam = linalg.eigh(mat, gram, eigvals_only=True)
    assert norm_equivalence_constant(disc) == pytest.approx(np.sqrt(lam[-1]), rel=1e-8)


def test_broken_norm_matrix_reproduces_energy_norms(rng):
    disc = Discretization(build_uniform_rect(2, 3), 2, eta=3.0)
    pair, vec = random_pair(disc, rng)
    gram = broken_norm_matrix(disc)
    assert np.sqrt(vec @ (gram @ vec)) == pytest.approx(energy_norms(pair)[1], rel=1e-10)
