import cvxpy as cp
import numpy as np
import pytest

from ctrlgraph.errors import InfeasibleSample, NotStable
from ctrlgraph.geometry import Polytope
from ctrlgraph.graph import default_state_scale
from ctrlgraph.lti import CostModel, LTISystem, equilibrium_for_output, is_schur, solve_dare
from ctrlgraph.scaling import max_scale_closed_form
from ctrlgraph.sdp import (SDPSynthesizer, dump_problem, falsify_invariance, load_problem,
                           synthesize_controller, synthesize_pi_set_fixed_gain, verify_synthesis)


def joint_program_at_fixed_gain(sys, F, eq, Yk, U):
    """Log-det program over (X, W) with W tied to F X; an independent formulation."""
    n = sys.nx
    X = cp.Variable((n, n), symmetric=True)
    W = cp.Variable((sys.nu, n))
    M = sys.A @ X + sys.B @ W
    cons = [W == F @ X, cp.bmat([[X, M.T], [M, X]]) >> 0]
    for h, k in zip(U.H, U.K):
        r = cp.reshape(h @ W, (1, n), order="F")
        cons.append(cp.bmat([[X, r.T], [r, np.array([[(k - h @ eq.u) ** 2]])]]) >> 0)
    for h, k in zip(Yk.H, Yk.K):
        r = cp.reshape(h @ sys.C @ X, (1, n), order="F")
        cons.append(cp.bmat([[X, r.T], [r, np.array([[(k - h @ eq.y) ** 2]])]]) >> 0)
    prob = cp.Problem(cp.Maximize(cp.log_det(X)), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


def small_system(rng, n=2):
    while True:
        try:
            sys = LTISystem(rng.standard_normal((n, n)) * 0.7, rng.standard_normal((n, 1)),
                            rng.standard_normal((1, n)))
        except ValueError:
            continue
        return sys


def spacecraft_setup(s):
    P, F = solve_dare(s.sys, s.cost)
    d = default_state_scale(s.sys, F, P, s.Y, s.U)
    return P, F, d


# analytic scalar cases

def test_scalar_joint_design():
    sys = LTISystem([[0.9]], [[1.0]], [[1.0]])
    U = Polytope.box([-0.05], [0.05])
    Y = Polytope.box([-1.0], [1.0])
    eq = equilibrium_for_output(sys, [0.0])
    res = synthesize_controller(sys, eq, Y, U)
    assert res.P[0, 0] == pytest.approx(1.0, rel=1e-6)
    assert res.log_det_inv_P == pytest.approx(0.0, abs=1e-6)
    F = res.F[0, 0]
    assert abs(F) <= 0.05 * (1 + 1e-6)
    assert abs(0.9 + F) < 1


def test_scalar_fixed_gain_design():
    sys = LTISystem([[0.5]], [[1.0]], [[1.0]])
    box = Polytope.box([-1.0], [1.0])
    eq = equilibrium_for_output(sys, [0.0])
    res = synthesize_pi_set_fixed_gain(sys, [[0.0]], eq, box, box)
    assert 1.0 / res.P[0, 0] == pytest.approx(1.0, rel=1e-6)


def test_fixed_gain_rejects_unstable_gain():
    sys = LTISystem([[0.5]], [[1.0]], [[1.0]])
    box = Polytope.box([-1.0], [1.0])
    eq = equilibrium_for_output(sys, [0.0])
    with pytest.raises(NotStable):
        synthesize_pi_set_fixed_gain(sys, [[1.0]], eq, box, box)


def test_boundary_sample_rejected():
    sys = LTISystem([[0.5]], [[1.0]], [[1.0]])
    box = Polytope.box([-1.0], [1.0])
    eq = equilibrium_for_output(sys, [1.0 - 1e-8])
    with pytest.raises(InfeasibleSample):
        synthesize_controller(sys, eq, box, Polytope.box([-5.0], [5.0]))


# structural properties

def test_reflection_symmetry():
    sys = LTISystem([[1.0, 0.1], [0.0, 1.0]], [[0.005], [0.1]], [[1.0, 0.0]])
    Y = Polytope.box([-1.0], [1.0])
    U = Polytope.box([-0.5], [0.5])
    a = synthesize_controller(sys, equilibrium_for_output(sys, [0.3]), Y, U)
    b = synthesize_controller(sys, equilibrium_for_output(sys, [-0.3]), Y, U)
    assert a.log_det_inv_P == pytest.approx(b.log_det_inv_P, rel=1e-6)
    # the quadratic form is even, so the reflected set has the same shape matrix
    assert np.allclose(a.P, b.P, rtol=1e-4, atol=1e-6 * np.max(np.abs(a.P)))


def test_relaxing_output_box_never_shrinks(rng):
    sys = LTISystem([[1.0, 0.1], [0.0, 1.0]], [[0.005], [0.1]], [[1.0, 0.0]])
    U = Polytope.box([-0.5], [0.5])
    eq = equilibrium_for_output(sys, [0.2])
    prev = -np.inf
    for s in (1.0, 1.2, 1.5, 2.0, 4.0):
        res = synthesize_controller(sys, eq, Polytope.box([-s], [s]), U)
        assert res.log_det_inv_P >= prev - 1e-6 * max(1.0, abs(prev))
        prev = res.log_det_inv_P


def test_fixed_gain_program_equals_joint_program(rng):
    for _ in range(5):
        sys = small_system(rng)
        P, F = solve_dare(sys, CostModel(np.eye(2), np.eye(1)))
        eq = equilibrium_for_output(sys, [0.1 * rng.standard_normal()])
        Y = Polytope.box([-1.0], [1.0])
        U = Polytope.box([-1.0], [1.0])
        if not (U.contains_strictly(eq.u, 0.1) and Y.contains_strictly(eq.y, 0.1)):
            continue
        res = synthesize_pi_set_fixed_gain(sys, F, eq, Y, U)
        ref = joint_program_at_fixed_gain(sys, F, eq, Y, U)
        assert res.log_det_inv_P == pytest.approx(ref, rel=1e-6, abs=1e-6)


# spacecraft

@pytest.mark.parametrize("y", [(100.0, 100.0), (450.0, 650.0), (0.0, 0.0), (-300.0, 1000.0)])
def test_volume_dominance_on_spacecraft(spacecraft, y):
    s = spacecraft
    P, F, d = spacecraft_setup(s)
    eq = equilibrium_for_output(s.sys, y)
    for k in s.Y.containing(eq.y):
        rho = max_scale_closed_form(s.sys, F, P, eq.x, eq.u, eq.y, s.Y[k], s.U)
        fixed = -np.linalg.slogdet(P / rho ** 2)[1]
        joint = synthesize_controller(s.sys, eq, s.Y[k], s.U, state_scale=d)
        gain = synthesize_pi_set_fixed_gain(s.sys, F, eq, s.Y[k], s.U, state_scale=d)
        # the scaled LQR set is feasible for both programs
        assert joint.log_det_inv_P >= fixed - 1e-6 * abs(fixed)
        assert gain.log_det_inv_P >= fixed - 1e-6 * abs(fixed)
        assert joint.log_det_inv_P >= gain.log_det_inv_P - 1e-6 * abs(gain.log_det_inv_P)
        assert is_schur(s.sys.A + s.sys.B @ joint.F)


def test_verify_good_and_inflated(spacecraft):
    s = spacecraft
    _, _, d = spacecraft_setup(s)
    eq = equilibrium_for_output(s.sys, [100.0, 100.0])
    k = s.Y.containing(eq.y)[0]
    res = synthesize_controller(s.sys, eq, s.Y[k], s.U, state_scale=d)
    ctrl = res.controller(eq, k)
    rep = verify_synthesis(s.sys, ctrl, s.Y[k], s.U)
    assert rep.ok() and rep.worst_margin >= -1e-7
    assert rep.falsifications == 0 and rep.simulations == 100
    assert rep.spectral_radius < 1
    big = res.controller(eq, k).__class__(res.F, res.P / 1.05, 1.0, eq.x, eq.u, eq.y, k)
    bad = verify_synthesis(s.sys, big, s.Y[k], s.U, n_samples=0)
    assert bad.worst_row_margin < 0
    assert not bad.ok()


def test_random_syntheses_are_invariant(rng):
    accepted = 0
    tries = 0
    while accepted < 100 and tries < 400:
        tries += 1
        sys = small_system(rng)
        eq = equilibrium_for_output(sys, [0.3 * rng.standard_normal()])
        Y = Polytope.box([-1.0], [1.0])
        U = Polytope.box([-1.0], [1.0])
        try:
            res = synthesize_controller(sys, eq, Y, U)
        except Exception:
            continue
        ctrl = res.controller(eq, 0)
        assert falsify_invariance(sys, ctrl, Y, U, 100, 200, rng) == 0
        # Lyapunov decrease from random interior states
        E = rng.standard_normal((100, 2))
        E *= rng.uniform(0, 1, (100, 1)) / np.sqrt(np.einsum("ij,jk,ik->i", E, res.P, E))[:, None]
        Acl = sys.A + sys.B @ res.F
        v0 = np.einsum("ij,jk,ik->i", E, res.P, E)
        v1 = np.einsum("ij,jk,ik->i", E @ Acl.T, res.P, E @ Acl.T)
        assert np.all(v1 <= v0 * (1 + 1e-9))
        assert verify_synthesis(sys, ctrl, Y, U, n_samples=0).ok()
        accepted += 1
    assert accepted == 100


def test_synthesizer_reuse_matches_fresh(spacecraft):
    s = spacecraft
    _, _, d = spacecraft_setup(s)
    syn = SDPSynthesizer(s.sys, s.Y, s.U, state_scale=d)
    for y in ((100.0, 100.0), (-200.0, 700.0)):
        eq = equilibrium_for_output(s.sys, y)
        k = s.Y.containing(eq.y)[0]
        a = syn.synthesize(eq, k)
        b = synthesize_controller(s.sys, eq, s.Y[k], s.U, state_scale=d)
        assert a.log_det_inv_P == pytest.approx(b.log_det_inv_P, rel=1e-9)


def test_dump_roundtrip(tmp_path, spacecraft):
    s = spacecraft
    eq = equilibrium_for_output(s.sys, [100.0, 100.0])
    P, F = solve_dare(s.sys, s.cost)
    path = tmp_path / "inst.txt"
    dump_problem(path, s.sys, eq, s.Y[0], s.U, F)
    blocks = load_problem(path)
    assert np.array_equal(blocks["A"], s.sys.A)
    assert np.array_equal(blocks["F"], F)
    assert np.array_equal(blocks["K_y"].ravel(), s.Y[0].K)
    assert np.array_equal(blocks["u_eq"].ravel(), eq.u)
