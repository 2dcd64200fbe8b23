"""Acceptance criteria 1-10; each test prints one PASS/FAIL line."""

import json
import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
import scipy.sparse as sp

import oracles
from heatreflect.cli import main
from heatreflect.control import ControlProblem, Quadrature, gramian, hum_control, transfer_experiment
from heatreflect.costbounds import (
    PotentialNorms,
    UniversalConstants,
    cost_bound_domain,
    cost_bound_equidistributed,
    cost_bound_equidistributed_domain,
    cost_bound_fractional,
    cost_bound_thick,
)
from heatreflect.discretize import (
    CoefficientField,
    assemble_operator,
    build_grid,
    build_reflection_operators,
    check_discrete_intertwining,
    mirror_cells,
    reflect_coefficients,
    symmetric_pair,
)
from heatreflect.geometry import (
    EquidistParams,
    ThicknessParams,
    certify_thickness,
    full_space,
    periodic_slabs,
    sector_params,
    symmetrize_equidistributed,
    symmetrize_halfspace,
    symmetrize_orthant,
    symmetrize_sector,
)
from heatreflect.transfer import (
    AbstractSystem,
    check_semigroup_commutation,
    fractional_power,
    spectral_intertwining,
    triple_from_reflection,
)

pytestmark = pytest.mark.acceptance
TENSOR = np.array([[2.0, 1.0], [1.0, 3.0]])


def reflected(shape, cells, bc, A=1.0, ctl=None):
    half, full = symmetric_pair(shape, cells=cells, dim=1 if shape == "sym_interval" else 2)
    fh = CoefficientField.build(half, A=A)
    ops = build_reflection_operators(half, full, bc)
    x = half.centers[:, 0]
    chi = np.zeros(half.n_cells, bool) if ctl is None else (x >= ctl[0]) & (x <= ctl[1])
    Hh = assemble_operator(half, fh, bc, chi)
    Hf = assemble_operator(full, reflect_coefficients(fh, half), bc, mirror_cells(ops, chi))
    return Hh, Hf, ops


def test_criterion_01_parameter_transforms(criterion):
    with criterion(1, 1.0) as rec:
        S = full_space(3)
        g, a = Fraction(3, 7), (Fraction(1, 2), Fraction(5, 3), Fraction(2))
        _, p = symmetrize_halfspace(S, ThicknessParams(g, a))
        rec.check(p.gamma == g / 2 and p.a == (2 * a[0], a[1], a[2]), "halfspace exact")
        _, p = symmetrize_orthant(S, ThicknessParams(g, a))
        rec.check(p.gamma == g / 8 and p.a == tuple(2 * v for v in a), "orthant exact")
        worst, exact = 0.0, True
        for a2 in [(Fraction(1), Fraction(1)), (Fraction(1, 3), Fraction(2)), (Fraction(5, 4), Fraction(7, 9))]:
            for theta in (0.0, math.pi / 8, math.pi / 4, 0.3):
                _, p = symmetrize_sector(full_space(2), ThicknessParams(g, a2), theta)
                exact &= p.gamma == g * a2[0] * a2[1] / (4 * (a2[0] ** 2 + a2[1] ** 2))
                ref = 2 * mp.sqrt(mp.mpf(a2[0].numerator) ** 2 / a2[0].denominator ** 2
                                  + mp.mpf(a2[1].numerator) ** 2 / a2[1].denominator ** 2)
                worst = max(worst, *(float(abs(v - ref) / ref) for v in p.a))
        rec.check(exact, "sector gamma exact")
        rec.check(worst <= 1e-15, f"sector sqrt rel err {worst:.1e} <= 1e-15")


def test_criterion_02_thickness_certification(criterion):
    r = 200
    with criterion(2, 10.0) as rec:
        S = periodic_slabs(0.25, 1.0, 2, 0)
        est = certify_thickness(S, (1.0, 1.0), resolution=r).gamma_estimate
        rec.check(abs(est - 0.25) <= 2 / r, f"slabs gamma {est:.4f} = 0.25 +- {2 / r}")
        S2, p2 = symmetrize_halfspace(S, ThicknessParams(0.25, (1.0, 1.0)))
        rec.check(p2.gamma == 0.125 and p2.a == (2.0, 1.0), "declared (0.125, (2, 1))")
        est2 = certify_thickness(S2, p2.a, window=[[-2.0, 0.0], [2.0, 1.0]], resolution=r).gamma_estimate
        rec.check(est2 >= 0.125 - 2 / r, f"symmetrized gamma {est2:.4f} >= 0.125 - {2 / r}")


def test_criterion_03_equidistributed_transforms(criterion):
    with criterion(3, 1.0) as rec:
        for G, delta in [(1.0, 0.25), (0.3, 0.1), (7.0, 3.4)]:
            p = EquidistParams(G, delta)
            q8 = symmetrize_equidistributed(p, math.pi / 8)
            q4 = symmetrize_equidistributed(p, math.pi / 4)
            rec.check(q8.G == 4 * G and q8.delta == delta, f"pi/8: ({G}, {delta}) -> ({q8.G}, {q8.delta})")
            rec.check(q4.G == 2 * G and q4.delta == delta, f"pi/4: ({G}, {delta}) -> ({q4.G}, {q4.delta})")


def _grid(n=100, seed=2024):
    rng = np.random.default_rng(seed)
    for i in range(n):
        d = 1 + i % 3
        yield {
            "gamma": float(rng.uniform(0.02, 0.98)),
            "a": [float(v) for v in rng.uniform(0.1, 3.0, size=d)],
            "T": float(10 ** rng.uniform(-2, 1)),
            "K": (1.0, 1.5)[i % 2],
            "theta": float(rng.uniform(0.55, 3.0)),
            "n": int(2 + i % 4),
            "G": float(rng.uniform(0.2, 5.0)),
            "frac": float(rng.uniform(0.02, 0.45)),
            "V": float(rng.uniform(0.0, 3.0)),
            "D": float(rng.uniform(1.0, 2.0)),
        }


def _rel(x, ref):
    return float(abs(mp.mpf(x) - ref) / max(abs(ref), mp.mpf(1e-300)))


def test_criterion_04_bound_formula_fidelity(criterion):
    with criterion(4, 30.0) as rec:
        worst = {}
        for p in _grid():
            K, g, a, T = p["K"], p["gamma"], p["a"], p["T"]
            c = UniversalConstants(K=K, D={1: p["D"], 2: p["D"], 3: p["D"]})
            a2 = (a * 2)[:2]
            a3 = (a * 3)[:3]
            delta = p["frac"] * p["G"]
            norms = PotentialNorms(p["V"], p["V"] / 2)
            pairs = {
                "thick": (cost_bound_thick(g, a, T, c), oracles.thick(g, a, T, K)),
                "fractional": (cost_bound_fractional(g, a, T, p["theta"], c),
                               oracles.fractional(g, a, T, p["theta"], K)),
                "halfspace": (cost_bound_domain("halfspace", g, a, T, c), oracles.halfspace(g, a, T, K)),
                "orthant": (cost_bound_domain("orthant", g, a, T, c), oracles.orthant(g, a, T, K)),
                "sector": (cost_bound_domain("sector", g, a2, T, c, n=p["n"]),
                           oracles.sector(g, a2, T, p["n"], K)),
                "triangle": (cost_bound_domain("triangle", g, a2, T, c), oracles.triangle_prism(g, a2, T, K)),
                "prism": (cost_bound_domain("prism", g, a3, T, c), oracles.triangle_prism(g, a3, T, K)),
                "equidistributed": (cost_bound_equidistributed(p["G"], delta, T, norms, 1 + len(a) % 3, c),
                                    oracles.equidistributed(p["G"], delta, T, p["D"], p["V"], p["V"] / 2)),
                "equidistributed-sector": (
                    cost_bound_equidistributed_domain("sector", p["G"], delta, T, norms, c, n=2),
                    oracles.equidistributed(4 * p["G"], delta, T, p["D"], p["V"], p["V"] / 2)),
                "equidistributed-triangle": (
                    cost_bound_equidistributed_domain("triangle", p["G"], delta, T, norms, c),
                    oracles.equidistributed(2 * p["G"], delta, T, p["D"], p["V"], p["V"] / 2)),
            }
            for name, (res, ref) in pairs.items():
                worst[name] = max(worst.get(name, 0.0), _rel(res.log_value, ref))
            # sector(n=2) against orthant composed with the sector parameter transform
            tp = sector_params(ThicknessParams(g, tuple(a2)))
            s = cost_bound_domain("sector", g, a2, T, c, n=2).log_value
            o = cost_bound_domain("orthant", float(tp.gamma), tp.a, T, c).log_value
            worst["sector2=orthant"] = max(worst.get("sector2=orthant", 0.0), abs(s - o) / abs(o))
        top = max(worst.values())
        rec.check(top <= 1e-12, f"max rel err over 100 points x {len(worst)} paths {top:.1e} <= 1e-12")
        for name, v in worst.items():
            if v > 1e-12:
                rec.check(False, f"{name} rel err {v:.1e}")


def test_criterion_05_discrete_intertwining(criterion):
    with criterion(5, 30.0) as rec:
        for bc in ("dirichlet", "neumann"):
            Hh, Hf, ops = reflected("sym_interval", 64, bc, ctl=(0.5, 0.75))
            xx = (ops.Xstar @ ops.X).toarray()
            rec.check(np.array_equal(xx, 2 * np.eye(Hh.n)), f"1D {bc}: Xstar X = 2I bit-exact")
            dd = check_discrete_intertwining(ops, Hh.H, Hf.H)
            rec.check(dd == 0.0, f"1D {bc}: defect {dd}")
        for cells in (16, 32, 64):
            for bc in ("dirichlet", "neumann"):
                Hh, Hf, ops = reflected("sym_box", cells, bc, A=TENSOR)
                xx = (ops.Xstar @ ops.X - 2 * sp.eye(Hh.n))
                rec.check(abs(xx).max() == 0, f"2D {cells}^2 {bc}: Xstar X = 2I bit-exact")
                dd = check_discrete_intertwining(ops, Hh.H, Hf.H)
                scale = abs(Hf.H).max()
                ok = dd <= 1e-12 * scale
                if not ok or cells == 64:
                    rec.check(ok, f"2D {cells}^2 {bc}: defect {dd:.1e} <= 1e-12 * {scale:.1e}")


def test_criterion_06_semigroup_and_spectral(criterion):
    with criterion(6, 10.0) as rec:
        Hh, Hf, ops = reflected("sym_interval", 32, "dirichlet")
        t = triple_from_reflection(ops)
        big, small = AbstractSystem.from_discrete(Hf), AbstractSystem.from_discrete(Hh)
        sg = check_semigroup_commutation(t, big, small, [0.01, 0.1, 1.0])
        rec.check(sg.defect <= 1e-10, f"semigroup defect {sg.defect:.1e} <= 1e-10")
        fr = spectral_intertwining(t, big, small, fractional_power(0.75))
        rec.check(fr.defect <= 1e-10, f"s^0.75 defect {fr.defect:.1e} <= 1e-10")


def test_criterion_07_scalar_hum(criterion):
    with criterion(7, 1.0) as rec:
        mp.mp.dps = 50
        oracle = mp.exp(-1) * mp.sqrt(2 / (1 - mp.exp(-2)))
        # independent route: minimal norm = |e^{-T} u0| / sqrt(Gramian), Gramian by quadrature
        gram = mp.quad(lambda s: mp.exp(-2 * (1 - s)), [0, 1])
        rec.check(abs(oracle - mp.exp(-1) / mp.sqrt(gram)) < mp.mpf(10) ** -45, "oracle recomputed")
        s = AbstractSystem(np.array([[1.0]]), np.array([[1.0]]))
        sol = hum_control(ControlProblem(s, 1.0, [1.0], Quadrature(32, "gauss"), eps=0.0))
        err = abs(sol.control_norm - float(oracle))
        rec.check(err <= 1e-8, f"|v| = {sol.control_norm:.15f}, error {err:.1e} <= 1e-8")


def _transfer_case(rec, label, Hh, Hf, ops, T, seed=20):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((20, Hh.n))
    data /= np.linalg.norm(data, axis=1)[:, None]
    rep = transfer_experiment(Hh, Hf, ops, T, data)
    res_ok = all(r["half_residual"] <= 10 * r["full_residual"] + 1e-14 for r in rep.rows)
    cost_ok = all(r["half_cost"] <= r["full_cost"] + 1e-10 for r in rep.rows)
    ratio = max(r["half_residual"] / r["full_residual"] for r in rep.rows if r["full_residual"] > 0)
    rec.check(res_ok, f"{label}: residual ratio <= {ratio:.3f} (limit 10)")
    rec.check(cost_ok, f"{label}: min margin {rep.min_margin:.1e} >= -1e-10")


def test_criterion_08_discrete_transfer(criterion):
    with criterion(8, 300.0) as rec:
        for bc in ("dirichlet", "neumann"):
            Hh, Hf, ops = reflected("sym_interval", 64, bc, ctl=(0.5, 0.75))
            rec.check(int(Hh.chi.sum()) == 16 and int(Hf.chi.sum()) == 32, f"1D {bc}: control covers 25% of cells")
            _transfer_case(rec, f"1D {bc}", Hh, Hf, ops, 0.5)
        Hh, Hf, ops = reflected("sym_box", 32, "dirichlet", A=TENSOR, ctl=(0.5, 0.75))
        rec.check(Hh.n == 32 * 32 and Hf.chi.mean() == 0.25, "2D 32^2 half square, 25% control")
        _transfer_case(rec, "2D tensor T=0.1", Hh, Hf, ops, 0.1)


def test_criterion_09_convergence(criterion):
    with criterion(9, 60.0) as rec:
        for k in (1, 2):
            ev = []
            for n in (32, 64, 128):
                g = build_grid("interval", L=1.0, cells=n, dim=1)
                H = assemble_operator(g, CoefficientField.build(g), "dirichlet").H.toarray()
                ev.append(np.linalg.eigvalsh(H)[k - 1])
            rich = math.log2((ev[0] - ev[1]) / (ev[1] - ev[2]))
            exact = (k * math.pi) ** 2
            err = math.log2(abs(ev[1] - exact) / abs(ev[2] - exact))
            rec.check(min(rich, err) >= 1.9, f"mode {k}: Richardson order {rich:.3f}, error order {err:.3f}")
        mp.mp.dps = 50
        # trapezoid at H = 1; the stiff lambda = 50 case is pre-asymptotic for m <= 32
        for lam in (1.0,):
            exact = float((1 - mp.exp(-2 * lam)) / (2 * lam))
            s = AbstractSystem(np.array([[lam]]), np.array([[1.0]]))
            tr = [abs(gramian(s, 1.0, Quadrature(m, "trapezoid"))[0, 0] - exact) for m in (8, 16, 32)]
            orders = [math.log(tr[i] / tr[i + 1]) / math.log((2 * m - 1) / (m - 1)) for i, m in enumerate((8, 16))]
            rec.check(all(1.9 <= o <= 2.1 for o in orders),
                      f"trapezoid lambda={lam:g}: orders {orders[0]:.3f}, {orders[1]:.3f}")
        g1 = gramian(AbstractSystem(np.array([[1.0]]), np.array([[1.0]])), 1.0, Quadrature(8))[0, 0]
        e1 = abs(g1 - float((1 - mp.exp(-2)) / 2))
        rec.check(e1 <= 1e-15, f"Gauss H=1: error {e1:.1e} at m=8 (round-off)")
        exact = float((1 - mp.exp(-100)) / 100)
        s = AbstractSystem(np.array([[50.0]]), np.array([[1.0]]))
        ga = [abs(gramian(s, 1.0, Quadrature(m))[0, 0] - exact) / exact for m in (8, 16, 32)]
        rec.check(ga[1] <= ga[0] * 2.0 ** -8 and ga[2] <= 1e-12,
                  f"Gauss lambda=50: rel errors {ga[0]:.1e}, {ga[1]:.1e}, {ga[2]:.1e} (spectral)")


def test_criterion_10_cli_determinism(criterion, tmp_path):
    cfg = {
        "command": "transfer-run",
        "parameters": {"shape": "interval", "cells": 64, "bc": "neumann", "control": {"box": [[0.5, 0.75]]},
                       "T": 0.5, "data": {"random": 20}},
        "output": {"format": "csv"},
        "seed": 1234,
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    with criterion(10, 300.0) as rec:
        codes = [main(["--config", str(path), "--out", str(tmp_path / name)]) for name in ("a", "b")]
        rec.check(codes == [0, 0], f"exit codes {codes}")
        a = (tmp_path / "a" / "manifest.json").read_bytes()
        b = (tmp_path / "b" / "manifest.json").read_bytes()
        rec.check(a == b, f"manifests byte-identical ({len(a)} bytes)")
