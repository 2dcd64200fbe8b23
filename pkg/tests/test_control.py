import json
import math

import mpmath as mp
import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from heatreflect.control import (
    ControlProblem,
    HUMSolver,
    Quadrature,
    gramian,
    hum_control,
    mild_solution,
    observed_cost,
    propagate,
    trajectory_csv,
    transfer_experiment,
)
from heatreflect.discretize import (
    CoefficientField,
    assemble_operator,
    build_grid,
    build_reflection_operators,
    mirror_cells,
    reflect_coefficients,
    symmetric_pair,
)
from heatreflect.errors import InvalidArgument, NumericalFailure, PreconditionViolation
from heatreflect.transfer import AbstractSystem

mp.mp.dps = 50


def scalar(lam=1.0, b=1.0):
    return AbstractSystem(np.array([[lam]]), np.array([[b]]))


def scalar_gramian(lam, T):
    lam, T = mp.mpf(lam), mp.mpf(T)
    return (1 - mp.exp(-2 * lam * T)) / (2 * lam)


def scalar_cost(lam, T):
    # minimal norm of v with int_0^T e^{-lam(T-s)} v ds = -e^{-lam T}
    return mp.exp(-mp.mpf(lam) * T) / mp.sqrt(scalar_gramian(lam, T))


def pair(bc="dirichlet", cells=16, dim=1, A=1.0, ctl=(0.5, 0.75)):
    shape = "sym_interval" if dim == 1 else "sym_box"
    half, full = symmetric_pair(shape, cells=cells, dim=dim)
    fh = CoefficientField.build(half, A=A)
    c = half.centers[:, 0]
    chi = (c > ctl[0]) & (c < ctl[1])
    ops = build_reflection_operators(half, full, bc)
    Hh = assemble_operator(half, fh, bc, chi)
    Hf = assemble_operator(full, reflect_coefficients(fh, half), bc, mirror_cells(ops, chi))
    return Hh, Hf, ops


# propagate


def test_propagate_zero_time_and_eigenvector():
    g = build_grid("interval", cells=16, dim=1)
    s = assemble_operator(g, CoefficientField.build(g), "dirichlet")
    u = np.random.default_rng(0).normal(size=16)
    assert np.array_equal(propagate(s, u, 0.0), u)
    mu, Q = AbstractSystem.from_discrete(s).spectrum
    out = propagate(s, Q[:, 3], 0.01)
    assert np.allclose(out, np.exp(-0.01 * mu[3]) * Q[:, 3], rtol=0, atol=1e-12 * np.exp(-0.01 * mu[3]) * 10)
    with pytest.raises(InvalidArgument):
        propagate(s, u, -1.0)


def test_neumann_mean_preserved():
    g = build_grid("interval", cells=32, dim=1)
    s = AbstractSystem.from_discrete(assemble_operator(g, CoefficientField.build(g, A=lambda x: 1 + x[:, 0]), "neumann"))
    u = np.random.default_rng(1).normal(size=32)
    assert abs(propagate(s, u, 0.7).mean() - u.mean()) <= 1e-12 * np.max(np.abs(u))


# quadrature and Gramian


def test_quadrature_validation():
    with pytest.raises(InvalidArgument):
        Quadrature(1)
    with pytest.raises(InvalidArgument):
        Quadrature(8, "simpson")


def test_scalar_gramian_gauss():
    G = gramian(scalar(), 1.0, Quadrature(32))
    assert abs(G[0, 0] - float(scalar_gramian(1, 1))) <= 1e-10


def test_gramian_trivial_cases():
    H = np.diag([1.0, 3.0])
    assert np.all(gramian(AbstractSystem(H, np.zeros((2, 2))), 1.0) == 0)
    for rule in ("gauss", "trapezoid"):
        G = gramian(AbstractSystem(np.zeros((3, 3)), np.eye(3)), 2.0, Quadrature(5, rule))
        assert np.allclose(G, 2.0 * np.eye(3), rtol=0, atol=1e-14)


def test_quadrature_orders():
    exact = float(scalar_gramian(1, 1))
    trap = [abs(gramian(scalar(), 1.0, Quadrature(m, "trapezoid"))[0, 0] - exact) for m in (8, 16, 32)]
    # trapezoid error ~ (m-1)^{-2}
    orders = [math.log(trap[i] / trap[i + 1]) / math.log((2 * m - 1) / (m - 1)) for i, m in enumerate((8, 16))]
    assert all(1.9 <= p <= 2.1 for p in orders)
    # Gauss converges spectrally; a stiff exponent shows the decay before round-off
    ex50 = float(scalar_gramian(50, 1))
    gauss = [abs(gramian(scalar(50.0), 1.0, Quadrature(m))[0, 0] - ex50) / ex50 for m in (8, 16, 32)]
    assert gauss[1] < 1e-3 * gauss[0] and gauss[2] < 1e-12


def test_gramian_bitwise_symmetric():
    Hh, Hf, _ = pair("neumann", 16)
    G = gramian(Hf, 0.3)
    assert np.array_equal(G, G.T)
    assert np.linalg.eigvalsh(G)[0] > -1e-14 * np.max(np.abs(G))


# HUM


def test_scalar_hum_oracle():
    sol = hum_control(ControlProblem(scalar(), 1.0, [1.0], Quadrature(32), eps=0.0))
    oracle = mp.exp(-1) * mp.sqrt(2 / (1 - mp.exp(-2)))
    assert abs(oracle - scalar_cost(1, 1)) < mp.mpf(10) ** -40
    assert abs(sol.control_norm - float(oracle)) <= 1e-8
    assert sol.terminal_residual <= 1e-12
    # closed-form trajectory v(s) = -e^{-1} e^{-(1-s)} 2/(1-e^{-2})
    v_exact = -math.exp(-1) * np.exp(-(1 - sol.nodes)) * 2 / (1 - math.exp(-2))
    assert np.allclose(sol.v_trajectory[:, 0], v_exact, rtol=1e-8)


def test_zero_datum():
    Hh, _, _ = pair()
    sol = hum_control(ControlProblem(Hh, 0.5, np.zeros(Hh.n)))
    assert np.all(sol.v_trajectory == 0) and sol.control_norm == 0 and sol.per_datum_cost == 0


def test_identity_system():
    s = AbstractSystem(np.zeros((3, 3)), np.eye(3))
    u0 = np.array([1.0, -2.0, 0.5])
    sol = hum_control(ControlProblem(s, 1.0, u0, eps=0.0))
    assert np.allclose(sol.v_trajectory, -u0[None, :], atol=1e-13)
    assert sol.control_norm == pytest.approx(np.linalg.norm(u0), rel=1e-13)
    assert sol.terminal_residual <= 1e-13


def test_singular_gramian_raises():
    s = AbstractSystem(np.diag([1.0, 2.0]), np.array([[1.0], [0.0]]))
    with pytest.raises(NumericalFailure) as info:
        hum_control(ControlProblem(s, 1.0, [1.0, 1.0], eps=0.0))
    assert info.value.condition is not None


def test_problem_validation():
    with pytest.raises(InvalidArgument):
        ControlProblem(scalar(), 0.0, [1.0])
    with pytest.raises(InvalidArgument):
        ControlProblem(scalar(), 1.0, [1.0], eps=-1.0)


def test_residual_budget_and_identity():
    Hh, _, _ = pair("dirichlet", 16)
    u0 = np.random.default_rng(2).normal(size=Hh.n)
    solver = HUMSolver(Hh, 0.5)
    sol = solver.solve(u0)
    assert sol.terminal_residual <= solver.eps * np.linalg.norm(sol.p) * (1 + 1e-6) + 1e-12
    assert sol.control_norm == pytest.approx(math.sqrt(sol.p @ solver.gramian @ sol.p), rel=1e-8)


def test_minimal_norm_over_kernel():
    # controls are node vectors; L v = sum_k w_k S(T-s_k) B v_k is the control-to-state map
    s = AbstractSystem(np.diag([1.0, 4.0]), np.eye(2))
    T, quad = 1.0, Quadrature(6)
    sol = hum_control(ControlProblem(s, T, [1.0, -1.0], quad, eps=0.0))
    nodes, w = quad.nodes(T)
    L = np.hstack([w[k] * np.diag(np.exp(-(T - nodes[k]) * np.array([1.0, 4.0]))) for k in range(6)])
    ker = sla.null_space(L)
    W = np.repeat(w, 2)
    v = sol.v_trajectory.ravel()
    base = math.sqrt(np.sum(W * v * v))
    rng = np.random.default_rng(3)
    for _ in range(50):
        dv = ker @ rng.normal(size=ker.shape[1])
        assert math.sqrt(np.sum(W * (v + dv) ** 2)) >= base - 1e-10


def test_doubling_eps_never_lowers_residual():
    Hh, _, _ = pair("neumann", 16)
    u0 = np.random.default_rng(5).normal(size=Hh.n)
    res = [HUMSolver(Hh, 0.5, eps=e).solve(u0).terminal_residual for e in 1e-12 * 2.0 ** np.arange(12)]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(res, res[1:]))


def test_mild_solution_shape_check():
    with pytest.raises(InvalidArgument):
        mild_solution(scalar(), [1.0], np.zeros((3, 1)), 1.0, Quadrature(4))


# observed cost


def test_observed_cost_scalar_and_identity():
    c_op = observed_cost(scalar(), 1.0, eps=0.0, mode="operator")
    c_dat = observed_cost(scalar(), 1.0, eps=0.0, data=[[1.0]])
    assert c_op == pytest.approx(c_dat, rel=1e-10)
    assert c_op == pytest.approx(float(scalar_cost(1, 1)), rel=1e-8)
    s = AbstractSystem(np.zeros((3, 3)), np.eye(3))
    assert observed_cost(s, 1.0, eps=0.0, mode="operator") == pytest.approx(1.0, rel=1e-12)
    assert observed_cost(scalar(), 2.0, eps=0.0, mode="operator") <= c_op


def test_operator_mode_dominates_datum_mode():
    Hh, _, _ = pair("dirichlet", 8)
    data = np.random.default_rng(6).normal(size=(5, Hh.n))
    data /= np.linalg.norm(data, axis=1)[:, None]
    assert observed_cost(Hh, 0.5, data=data) <= observed_cost(Hh, 0.5, mode="operator") * (1 + 1e-8)
    with pytest.raises(InvalidArgument):
        observed_cost(Hh, 0.5)


# transfer experiment


@pytest.mark.parametrize("bc", ["dirichlet", "neumann"])
def test_first_mode_transfer(bc):
    Hh, Hf, ops = pair(bc, 32)
    _, Q = AbstractSystem.from_discrete(Hh).spectrum
    rep = transfer_experiment(Hh, Hf, ops, 0.5, [Q[:, 0]], compare_direct=True)
    row = rep.rows[0]
    assert row["cost_ok"] and row["residual_ok"]
    assert row["half_residual"] <= 1e-6
    assert row["half_cost"] <= row["full_cost"] + 1e-10
    json.dumps(rep.to_dict())


def test_zero_datum_transfer():
    Hh, Hf, ops = pair("dirichlet", 8)
    rep = transfer_experiment(Hh, Hf, ops, 0.5, [np.zeros(Hh.n)])
    r = rep.rows[0]
    assert r["half_cost"] == 0 and r["full_cost"] == 0 and np.all(rep.trajectories[0] == 0)


def test_2d_tensor_transfer():
    Hh, Hf, ops = pair("dirichlet", 8, dim=2, A=np.array([[2.0, 1.0], [1.0, 3.0]]), ctl=(0.25, 0.6))
    data = np.random.default_rng(7).normal(size=(3, Hh.n))
    rep = transfer_experiment(Hh, Hf, ops, 0.1, data)
    assert rep.passed and rep.min_margin >= -1e-10


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["dirichlet", "neumann"]))
def test_transfer_inequality_random_batches(seed, bc):
    Hh, Hf, ops = pair(bc, 16)
    data = np.random.default_rng(seed).normal(size=(4, Hh.n))
    rep = transfer_experiment(Hh, Hf, ops, 0.3, data)
    assert all(r["half_cost"] <= r["full_cost"] + 1e-10 for r in rep.rows)


def test_threads_do_not_change_results():
    Hh, Hf, ops = pair("neumann", 16)
    data = np.random.default_rng(8).normal(size=(6, Hh.n))
    a = transfer_experiment(Hh, Hf, ops, 0.5, data).to_dict()
    b = transfer_experiment(Hh, Hf, ops, 0.5, data, threads=3).to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_precondition_violations():
    Hh, Hf, ops = pair("dirichlet", 8)
    # full control set that is not the mirror of the half one
    bad = Hf.with_control(np.zeros(Hf.n, bool))
    with pytest.raises(PreconditionViolation) as info:
        transfer_experiment(Hh, bad, ops, 0.5, [np.ones(Hh.n)])
    assert "B" in info.value.relation
    # unreflected potential breaks the generator relation
    half, full = ops.half, ops.full
    fh = CoefficientField.build(half, V=lambda x: x[:, 0])
    Hh2 = assemble_operator(half, fh, "dirichlet", Hh.chi)
    Hf2 = assemble_operator(full, CoefficientField.build(full, V=lambda x: x[:, 0]), "dirichlet", Hf.chi)
    with pytest.raises(PreconditionViolation) as info:
        transfer_experiment(Hh2, Hf2, ops, 0.5, [np.ones(Hh.n)])
    assert "H" in info.value.relation


def test_trajectory_csv():
    Hh, Hf, ops = pair("dirichlet", 4)
    rep = transfer_experiment(Hh, Hf, ops, 0.5, np.eye(Hh.n)[:2], quadrature=Quadrature(4))
    lines = trajectory_csv(rep.nodes, rep.trajectories).splitlines()
    assert lines[0] == "datum,t," + ",".join(f"v_{j}" for j in range(Hh.n))
    assert len(lines) == 1 + 2 * 4
    assert trajectory_csv([], []).splitlines() == ["datum,t"]
