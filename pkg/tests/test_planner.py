import numpy as np
import pytest

from ctrlgraph.controller import LocalController
from ctrlgraph.errors import A2Violated, Timeout
from ctrlgraph.geometry import Polytope, UnionOfPolytopes
from ctrlgraph.graph import ControllerGraph
from ctrlgraph.lti import CostModel, LTISystem, equilibrium_for_output, solve_dare
from ctrlgraph.planner import baseline_lqr_run, evaluate_cost, execute


def scalar_setup():
    sys = LTISystem([[0.9]], [[1.0]], [[1.0]])
    U = Polytope.box([-10.0], [10.0])
    Y = UnionOfPolytopes((Polytope.box([-10.0], [10.0]),))
    cost = CostModel([[1.0]], [[1.0]])
    return sys, U, Y, cost


def scalar_node(sys, y, rho, i, F=-0.4):
    eq = equilibrium_for_output(sys, [y])
    return LocalController(np.array([[F]]), np.eye(1), rho, eq.x, eq.u, eq.y, 0).with_id(i)


def test_cost_examples():
    cost = CostModel([[1.0]], [[1.0]])
    assert evaluate_cost(np.zeros((5, 1)), np.zeros((5, 1)), cost) == 0.0
    N = 21  # 0.25**21 < 1e-12
    x = 0.5 ** np.arange(N + 1)[:, None]
    J = evaluate_cost(x, np.zeros_like(x), cost)
    assert J == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert evaluate_cost(x, np.zeros_like(x), cost, stop_time=0) == 1.0


def test_single_node_at_target_converges_immediately():
    sys, U, Y, cost = scalar_setup()
    node = scalar_node(sys, 0.0, 1.0, 0)
    g = ControllerGraph([node], {})
    r = execute(sys, g, [0], node.x_eq, [0.0], U, Y, cost, output_tol=1e-6)
    assert r.steps == 0 and r.termination == "converged"
    assert r.cost == 0.0


def replay(sys, nodes, x0, yf, tol, max_steps):
    """Step-by-step oracle of the switching law."""
    x = float(x0[0])
    i = 0
    xs, act = [], []
    for _ in range(max_steps + 1):
        if i + 1 < len(nodes):
            nxt = nodes[i + 1]
            if (x - nxt.x_eq[0]) ** 2 * nxt.P[0, 0] <= nxt.rho ** 2:
                i += 1
        c = nodes[i]
        u = c.F[0, 0] * (x - c.x_eq[0]) + c.u_eq[0]
        xs.append(x)
        act.append(i)
        if i == len(nodes) - 1 and abs(x - yf) <= tol:
            break
        x = sys.A[0, 0] * x + sys.B[0, 0] * u
    return np.array(xs), np.array(act)


def test_two_node_chain_switches_once():
    sys, U, Y, cost = scalar_setup()
    a = scalar_node(sys, 0.8, 1.5, 0)
    b = scalar_node(sys, 0.0, 1.0, 1)
    g = ControllerGraph([a, b], {(0, 1): 0.64})
    r = execute(sys, g, [0, 1], [2.0], [0.0], U, Y, cost, output_tol=1e-3)
    xs, act = replay(sys, [a, b], [2.0], 0.0, 1e-3, 2000)
    assert np.array_equal(r.x[:, 0], xs)
    assert np.array_equal(r.nodes, act)
    assert len(r.switches) == 1
    t_switch = r.switches[0][0]
    # the switch happens at the first sample inside the next set
    first = int(np.argmax(np.abs(xs) <= 1.0))
    assert t_switch == first
    assert np.abs(r.x[t_switch - 1, 0]) > 1.0


def test_a2_and_timeout():
    sys, U, Y, cost = scalar_setup()
    a = scalar_node(sys, 0.8, 1.5, 0)
    b = scalar_node(sys, 0.0, 1.0, 1)
    g = ControllerGraph([a, b], {(0, 1): 0.64})
    with pytest.raises(A2Violated):
        execute(sys, g, [0, 1], [5.0], [0.0], U, Y, cost)
    with pytest.raises(Timeout) as info:
        execute(sys, g, [0, 1], [2.0], [0.0], U, Y, cost, output_tol=1e-3, max_steps=3)
    part = info.value.partial
    assert part.termination == "timeout" and part.steps == 3


def test_baseline_at_origin():
    sys, U, Y, cost = scalar_setup()
    r = baseline_lqr_run(sys, cost, [0.0], [0.0], U, Y)
    assert r.cost == 0.0 and r.safe and r.steps == 0


def test_baseline_matches_single_node_without_active_constraints():
    rng = np.random.default_rng(3)
    sys = LTISystem(rng.standard_normal((3, 3)) * 0.5, rng.standard_normal((3, 2)),
                    rng.standard_normal((2, 3)))
    cost = CostModel(np.eye(3), np.eye(2))
    U = Polytope.box([-1e9] * 2, [1e9] * 2)
    Y = UnionOfPolytopes((Polytope.box([-1e9] * 2, [1e9] * 2),))
    P, F = solve_dare(sys, cost)
    yf = np.array([0.3, -0.2])
    eq = equilibrium_for_output(sys, yf)
    node = LocalController(F, P, 1e6, eq.x, eq.u, eq.y, 0).with_id(0)
    x0 = rng.standard_normal(3)
    run = execute(sys, ControllerGraph([node], {}), [0], x0, yf, U, Y, cost, output_tol=1e-6)
    base = baseline_lqr_run(sys, cost, x0, yf, U, Y, output_tol=1e-6)
    assert run.steps == base.steps
    assert np.allclose(run.x, base.x, atol=1e-10, rtol=0)
    assert np.allclose(run.u, base.u, atol=1e-10, rtol=0)
    assert run.cost == pytest.approx(base.cost, rel=1e-10)


# spacecraft run properties

def test_spacecraft_run_is_safe_and_monotone(spacecraft, fixed_graph, fixed_run):
    s = spacecraft
    path, r = fixed_run
    assert r.termination == "converged" and r.safe
    assert np.linalg.norm(r.y[-1] - s.yf) <= s.output_tol
    # node index along the path never decreases and ends at the last node
    pos = {n: k for k, n in enumerate(path.nodes)}
    idx = np.array([pos[n] for n in r.nodes])
    assert np.all(np.diff(idx) >= 0) and idx[-1] == len(path.nodes) - 1
    # switches only into sets that hold the state; V never rises while a node is held
    for t, n in r.switches:
        assert fixed_graph.nodes[n].contains(r.x[t])
    for t in range(r.steps):
        if r.nodes[t] == r.nodes[t + 1]:
            c = fixed_graph.nodes[r.nodes[t]]
            assert c.value(r.x[t + 1]) <= c.value(r.x[t]) * (1 + 1e-12) + 1e-9
    # every input and output is admissible
    assert np.all(r.u @ s.U.H.T <= s.U.K + 1e-12)
    assert all(s.Y.contains(y) for y in r.y)


def test_replay_determinism(spacecraft, fixed_graph, fixed_run):
    s = spacecraft
    path, r = fixed_run
    again = execute(s.sys, fixed_graph, path.nodes, s.initial_state(), s.yf, s.U, s.Y, s.cost,
                    s.output_tol, s.max_steps)
    assert np.array_equal(r.x, again.x) and np.array_equal(r.u, again.u)
    assert r.cost == again.cost


def test_skip_ahead_is_safe(spacecraft, fixed_graph, fixed_run):
    s = spacecraft
    path, r = fixed_run
    fast = execute(s.sys, fixed_graph, path.nodes, s.initial_state(), s.yf, s.U, s.Y, s.cost,
                   s.output_tol, s.max_steps, skip_ahead=True)
    assert fast.safe and fast.termination == "converged"
    assert fast.steps <= r.steps


def test_baseline_violates_constraints(spacecraft, baseline_run):
    b = baseline_run
    assert b.input_violations >= 1
    in_debris = [(250 < y[0] < 350) and (350 < y[1] < 450) for y in b.y]
    assert any(in_debris)
