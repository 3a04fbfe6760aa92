import numpy as np
import pytest

from hdglift.analysis import DiscretePair
from hdglift.forms import Discretization
from hdglift.mesh import build_uniform_rect
from hdglift.system import DofMap


def random_pair(disc, rng):
    """Random element field plus random traces on interior edges (zero on the boundary)."""
    dofmap = DofMap.build(disc)
    u = rng.standard_normal((disc.mesh.n_elements, disc.n_u))
    uhat = rng.standard_normal(dofmap.n_trace_dofs)
    return DiscretePair(disc, u, dofmap.traces_by_edge(uhat)), dofmap.join(u, uhat)


@pytest.fixture
def rng():
    return np.random.default_rng(20241014)


@pytest.fixture
def unit_disc():
    def make(k=1, n=1, **kw):
        return Discretization(build_uniform_rect(n, n), k, **kw)

    return make


ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0][1:].split(".")[0]), s)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
