import numpy as np
import pytest

from hdglift.analysis import local_energy
from hdglift.forms import (
    Discretization,
    local_a,
    local_b,
    local_b_lifted,
    local_j,
    local_system,
)
from hdglift.mesh import build_uniform_rect

DEGREES = [1, 2, 3, 4]


def project(tables, fn):
    """Element coefficients of the L2 projection of fn(x, y)."""
    mass = tables.phi.T @ (tables.weights[:, None] * tables.phi)
    rhs = tables.phi.T @ (tables.weights * fn(tables.points[:, 0], tables.points[:, 1]))
    return np.linalg.solve(mass, rhs)


def local_vector(disc, u, traces=None):
    v = np.zeros(disc.n_loc)
    v[: disc.n_u] = u
    for m, t in (traces or {}).items():
        v[disc.trace_slice(m)] = t
    return v


@pytest.fixture
def unit1():
    return Discretization(build_uniform_rect(1, 1), 1)


def test_a_examples(unit1):
    t = unit1.tables(0)
    a = local_a(t)
    vx = project(t, lambda x, y: x)
    vy = project(t, lambda x, y: y)
    one = project(t, lambda x, y: 1 + 0 * x)
    assert vx @ a @ vx == pytest.approx(1.0, rel=1e-13)
    assert abs(one @ a @ one) <= 1e-14
    assert abs(vx @ a @ vy) <= 1e-14


def test_a_kernel_is_constants(unit1):
    eig = np.linalg.eigvalsh(local_a(Discretization(build_uniform_rect(1, 1), 3).tables(0)))
    assert np.sum(eig < 1e-12) == 1


def test_b_examples(unit1):
    t = unit1.tables(0)
    b = local_b(t)
    ux = project(t, lambda x, y: x)
    v_x = local_vector(unit1, ux)
    v_one = local_vector(unit1, project(t, lambda x, y: 1 + 0 * x))
    assert ux @ b @ v_x == pytest.approx(-1.0, rel=1e-13)
    assert abs(ux @ b @ v_one) <= 1e-14


def test_b_vanishes_on_matching_traces(rng):
    disc = Discretization(build_uniform_rect(3, 3), 2)
    t = disc.tables(4)
    v_el = rng.standard_normal(disc.n_u)
    traces = {}
    for m, et in enumerate(t.edges):
        # exact restriction of the element function to the edge
        traces[m] = np.linalg.lstsq(et.psi, et.phi @ v_el, rcond=None)[0]
    v = local_vector(disc, v_el, traces)
    u = rng.standard_normal(disc.n_u)
    assert abs(u @ local_b(t) @ v) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)


def _single_edge_unit_pair(disc):
    # v = 0 inside, v_hat = -1 on the right edge: v - v_hat = 1 there only
    return local_vector(disc, np.zeros(disc.n_u), {1: np.array([-1.0, 0.0])})


@pytest.mark.parametrize("eta, expected", [(1.0, 5.0), (10.0, 14.0)])
def test_j_unit_pair(unit1, eta, expected):
    v = _single_edge_unit_pair(unit1)
    assert v @ local_j(unit1.tables(0), eta) @ v == pytest.approx(expected, rel=1e-13)


def test_j_vanishes_without_jumps(rng):
    disc = Discretization(build_uniform_rect(2, 2), 3)
    t = disc.tables(0)
    v_el = rng.standard_normal(disc.n_u)
    traces = {m: np.linalg.lstsq(et.psi, et.phi @ v_el, rcond=None)[0] for m, et in enumerate(t.edges)}
    v = local_vector(disc, v_el, traces)
    assert abs(v @ local_j(t, 1.0) @ v) <= 1e-12 * (v @ v)


def test_j_rejects_nonpositive_eta(unit1):
    with pytest.raises(ValueError):
        local_j(unit1.tables(0), 0.0)
    with pytest.raises(ValueError):
        Discretization(build_uniform_rect(2, 2), 1, eta=-1.0)


def test_per_edge_eta_override():
    mesh = build_uniform_rect(1, 1)
    eta = np.array([1.0, 10.0, 1.0, 1.0])  # right edge has id 1 on a single element
    disc = Discretization(mesh, 1, eta=eta)
    assert disc.local_eta(0)[1] == 10.0
    v = _single_edge_unit_pair(disc)
    assert v @ local_system(disc, 0).matrix @ v == pytest.approx(14.0, rel=1e-13)


def test_load_examples(unit1):
    assert np.all(local_system(unit1, 0, lambda x, y: 0 * x).load == 0)
    load = local_system(unit1, 0, lambda x, y: 1 + 0 * x).load
    assert load[0] == pytest.approx(1.0, rel=1e-14)
    assert np.all(load[unit1.n_u :] == 0)


def _random_discs():
    return [
        Discretization(build_uniform_rect(3, 2, (-0.3, 1.1, 0.2, 0.9)), k, eta=eta)
        for k in DEGREES
        for eta in (1e-3, 1.0, 50.0)
    ]


@pytest.mark.parametrize("disc", _random_discs(), ids=lambda d: f"k{d.degree}-eta{d.edge_eta[0]:g}")
def test_symmetry(disc):
    for elem in range(disc.mesh.n_elements):
        mat = local_system(disc, elem).matrix
        assert np.abs(mat - mat.T).max() <= 1e-13 * np.abs(mat).max()


@pytest.mark.parametrize("k", DEGREES)
def test_b_face_equals_lifting_form(k, rng):
    disc = Discretization(build_uniform_rect(4, 4, (0, 2, 0, 1)), k)
    for elem in (0, 5, 15):
        t = disc.tables(elem)
        face, lifted = local_b(t), local_b_lifted(t)
        for _ in range(20):
            u, v = rng.standard_normal(disc.n_u), rng.standard_normal(disc.n_loc)
            bf, bl = u @ face @ v, u @ lifted @ v
            assert abs(bf - bl) <= 1e-12 * max(abs(bf), np.abs(u) @ np.abs(face) @ np.abs(v))


@pytest.mark.parametrize("disc", _random_discs(), ids=lambda d: f"k{d.degree}-eta{d.edge_eta[0]:g}")
def test_quadratic_form_is_energy(disc, rng):
    elem = 2
    mat = local_system(disc, elem).matrix
    tables = disc.tables(elem)
    for _ in range(100):
        v = rng.standard_normal(disc.n_loc)
        traces = [v[disc.trace_slice(m)] for m in range(4)]
        energy, _ = local_energy(tables, disc.local_eta(elem), v[: disc.n_u], traces)
        assert abs(v @ mat @ v - energy) <= 1e-10 * energy


@pytest.mark.parametrize("k", [1, 2, 3])
def test_nullity_one(k):
    eig = np.linalg.eigvalsh(local_system(Discretization(build_uniform_rect(1, 1), k), 0).matrix)
    assert np.sum(eig < 1e-10 * eig.max()) == 1
    assert eig.min() >= -1e-10 * eig.max()


@pytest.mark.parametrize("k", DEGREES)
@pytest.mark.parametrize("eta", [1e-8, 1.0, 1e8])
def test_element_block_positive_definite(k, eta):
    disc = Discretization(build_uniform_rect(2, 2), k, eta=eta)
    n_u = disc.n_u
    k_uu = local_system(disc, 0).matrix[:n_u, :n_u]
    np.linalg.cholesky(k_uu)
