import numpy as np
import pytest

from ctrlgraph.graph import build_graph, sample_grid, shortest_path
from ctrlgraph.planner import baseline_lqr_run, execute
from ctrlgraph.scenario import spacecraft_scenario

_ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def spacecraft():
    return spacecraft_scenario()


@pytest.fixture(scope="session")
def spacecraft_samples(spacecraft):
    return sample_grid(spacecraft.Y, spacecraft.grid, extra=[spacecraft.y0, spacecraft.yf])


def _plan(scn, graph):
    x0 = scn.initial_state()
    path = shortest_path(graph, graph.start_nodes(x0), graph.goal_nodes(scn.sys, scn.yf))
    run = execute(scn.sys, graph, path.nodes, x0, scn.yf, scn.U, scn.Y, scn.cost,
                  scn.output_tol, scn.max_steps)
    return path, run


@pytest.fixture(scope="session")
def fixed_graph(spacecraft, spacecraft_samples):
    s = spacecraft
    return build_graph(s.sys, spacecraft_samples, "fixed-gain-lqr", s.cost, s.Y, s.U)


@pytest.fixture(scope="session")
def sdp_graph(spacecraft, spacecraft_samples):
    s = spacecraft
    return build_graph(s.sys, spacecraft_samples, "sdp", s.cost, s.Y, s.U)


@pytest.fixture(scope="session")
def fixed_run(spacecraft, fixed_graph):
    return _plan(spacecraft, fixed_graph)


@pytest.fixture(scope="session")
def sdp_run(spacecraft, sdp_graph):
    return _plan(spacecraft, sdp_graph)


@pytest.fixture(scope="session")
def baseline_run(spacecraft):
    s = spacecraft
    return baseline_lqr_run(s.sys, s.cost, s.initial_state(), s.yf, s.U, s.Y, s.output_tol,
                            s.max_steps)
