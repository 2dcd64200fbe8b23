"""Minimal-norm null controls through the controllability Gramian.

For ``u' + H u = B v`` on ``[0, T]`` the Gramian is

    Λ = ∫_0^T S(T-s) B B^T S(T-s)^T ds,   S(t) = exp(-t H),

and the minimal-norm control is ``v(s) = B^T S(T-s)^T p`` with
``(Λ + ε I) p = -S(T) u0``.  The control lives on the nodes of a fixed time
quadrature, and the same rule defines its L² norm and the mild solution, so
the discrete problem is self-consistent.  Everything is computed in the
eigenbasis of the symmetric ``H``: with ``H = Q diag(μ) Q^T``,

    Q^T Λ Q = (Q^T B B^T Q) ∘ F,   F_ij = Σ_k w_k exp(-(T-s_k)(μ_i + μ_j)).
"""

from __future__ import annotations

import csv
import io
import math
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discretize import DiscreteSystem, ReflectionOperators, mirror_cells
from .errors import InvalidArgument, NumericalFailure, PreconditionViolation
from .transfer import (
    AbstractSystem,
    check_control_intertwining,
    check_generator_intertwining,
    operator_norm,
    triple_from_reflection,
)

__all__ = [
    "Quadrature",
    "ControlProblem",
    "ControlSolve",
    "HUMSolver",
    "as_system",
    "propagate",
    "gramian",
    "hum_control",
    "mild_solution",
    "observed_cost",
    "TransferReport",
    "transfer_experiment",
    "trajectory_csv",
]

_SYSTEMS: "weakref.WeakKeyDictionary[DiscreteSystem, AbstractSystem]" = weakref.WeakKeyDictionary()


def as_system(system) -> AbstractSystem:
    """View a ``DiscreteSystem`` as an ``AbstractSystem`` (cached, so the eigendecomposition is shared)."""
    if isinstance(system, AbstractSystem):
        return system
    if isinstance(system, DiscreteSystem):
        if system not in _SYSTEMS:
            _SYSTEMS[system] = AbstractSystem.from_discrete(system)
        return _SYSTEMS[system]
    raise InvalidArgument(f"expected AbstractSystem or DiscreteSystem, got {type(system).__name__}")


@dataclass(frozen=True)
class Quadrature:
    """Time rule on ``[0, T]``: ``"gauss"`` (Gauss-Legendre) or ``"trapezoid"``."""

    m: int = 32
    rule: str = "gauss"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise InvalidArgument(f"need at least 2 quadrature nodes, got {self.m!r}")
        if self.rule not in ("gauss", "trapezoid"):
            raise InvalidArgument(f"unknown quadrature rule {self.rule!r}")

    def nodes(self, T: float) -> tuple[np.ndarray, np.ndarray]:
        if self.rule == "gauss":
            x, w = np.polynomial.legendre.leggauss(self.m)
            return 0.5 * T * (x + 1.0), 0.5 * T * w
        s = np.linspace(0.0, T, self.m)
        w = np.full(self.m, T / (self.m - 1))
        w[[0, -1]] *= 0.5
        return s, w

    def to_dict(self) -> dict:
        return {"m": self.m, "rule": self.rule}


def _check_T(T):
    if not (math.isfinite(T) and T > 0):
        raise InvalidArgument(f"time horizon must be positive and finite, got {T!r}")


@dataclass
class ControlProblem:
    system: object
    T: float
    u0: np.ndarray
    quadrature: Quadrature = field(default_factory=Quadrature)
    eps: float | None = None

    def __post_init__(self):
        _check_T(self.T)
        if self.eps is not None and not (self.eps >= 0 and math.isfinite(self.eps)):
            raise InvalidArgument(f"regularization must be >= 0, got {self.eps!r}")
        self.u0 = np.asarray(self.u0, dtype=float).ravel()


@dataclass
class ControlSolve:
    nodes: np.ndarray
    weights: np.ndarray
    v_trajectory: np.ndarray  # (m, control_dim)
    control_norm: float
    terminal_residual: float
    gramian_condition: float
    per_datum_cost: float
    eps: float
    p: np.ndarray

    def to_dict(self) -> dict:
        return {
            "control_norm": self.control_norm,
            "terminal_residual": self.terminal_residual,
            "gramian_condition": self.gramian_condition,
            "per_datum_cost": self.per_datum_cost,
            "eps": self.eps,
        }


def propagate(system, u0, t: float) -> np.ndarray:
    """``exp(-t H) u0`` by spectral decomposition; ``t = 0`` returns a copy of ``u0``."""
    if not math.isfinite(t) or t < 0:
        raise InvalidArgument(f"time must be finite and non-negative, got {t!r}")
    u0 = np.asarray(u0, dtype=float)
    if t == 0:
        return u0.copy()
    mu, Q = as_system(system).spectrum
    return Q @ (np.exp(-t * mu) * (Q.T @ u0))


def _l2_norm(v: np.ndarray, w: np.ndarray) -> float:
    return math.sqrt(max(float(w @ np.einsum("ij,ij->i", v, v)), 0.0))


class HUMSolver:
    """Gramian factorization for one system, horizon and rule; reused across data."""

    def __init__(self, system, T: float, quadrature: Quadrature | None = None, eps: float | None = None):
        _check_T(T)
        self.system = as_system(system)
        self.T = float(T)
        self.quadrature = quadrature or Quadrature()
        mu, Q = self.system.spectrum
        self.mu, self.Q = mu, Q
        self.s, self.w = self.quadrature.nodes(self.T)
        tau = self.T - self.s
        self.E = np.exp(-np.outer(mu, tau))  # (n, m)
        self.QB = Q.T @ self.system.B_dense  # (n, control_dim)
        F = (self.E * self.w) @ self.E.T
        G = (self.QB @ self.QB.T) * F
        self.gramian_eig = 0.5 * (G + G.T)
        n = len(mu)
        if eps is None:
            eps = 1e-12 * float(np.trace(self.gramian_eig)) / n
        if not (eps >= 0 and math.isfinite(eps)):
            raise InvalidArgument(f"regularization must be >= 0, got {eps!r}")
        self.eps = float(eps)
        self.sigma, self.W = np.linalg.eigh(self.gramian_eig)
        reg = self.sigma + self.eps
        self.condition = float(reg[-1] / reg[0]) if reg[0] > 0 else math.inf
        try:
            self._chol = sla.cho_factor(self.gramian_eig + self.eps * np.eye(n), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(
                f"regularized Gramian is singular (condition {self.condition:.3e})", self.condition
            ) from exc

    @property
    def gramian(self) -> np.ndarray:
        L = self.Q @ self.gramian_eig @ self.Q.T
        return 0.5 * (L + L.T)

    def solve(self, u0) -> ControlSolve:
        u0 = np.asarray(u0, dtype=float).ravel()
        if u0.shape != (len(self.mu),):
            raise InvalidArgument(f"initial state has length {u0.size}, expected {len(self.mu)}")
        rhs = -np.exp(-self.T * self.mu) * (self.Q.T @ u0)
        p_hat = sla.cho_solve(self._chol, rhs)
        if not np.all(np.isfinite(p_hat)):
            raise NumericalFailure("non-finite Gramian solve", self.condition)
        v = (self.QB.T @ (self.E * p_hat[:, None])).T  # (m, control_dim)
        res = mild_solution(self.system, u0, v, self.T, self.quadrature)
        norm = _l2_norm(v, self.w)
        u0n = float(np.linalg.norm(u0))
        return ControlSolve(
            nodes=self.s,
            weights=self.w,
            v_trajectory=v,
            control_norm=norm,
            terminal_residual=float(np.linalg.norm(res)),
            gramian_condition=self.condition,
            per_datum_cost=norm / u0n if u0n > 0 else 0.0,
            eps=self.eps,
            p=self.Q @ p_hat,
        )

    def cost_operator(self) -> np.ndarray:
        """Matrix of ``u0 -> |v|`` in eigen coordinates: ``Λ^{1/2} (Λ + ε)^{-1} S(T)``."""
        sig = np.clip(self.sigma, 0.0, None)
        reg = self.sigma + self.eps
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(sig > 0, np.sqrt(sig) / reg, 0.0)
        return (self.W * scale) @ self.W.T * np.exp(-self.T * self.mu)[None, :]

    def operator_cost(self, tol: float = 1e-13, maxiter: int = 20000) -> float:
        """Largest singular value of the cost operator by power iteration."""
        M = self.cost_operator()
        if not np.all(np.isfinite(M)):
            raise NumericalFailure("cost operator is not finite", self.condition)
        x = np.ones(M.shape[1]) / math.sqrt(M.shape[1])
        x += 1e-3 * np.cos(np.arange(M.shape[1]))
        x /= np.linalg.norm(x)
        val = 0.0
        for _ in range(maxiter):
            y = M.T @ (M @ x)
            ny = float(np.linalg.norm(y))
            if ny == 0.0:
                return 0.0
            new = math.sqrt(ny)
            x = y / ny
            if abs(new - val) <= tol * new:
                return new
            val = new
        return val


def gramian(system, T: float, quadrature: Quadrature | None = None) -> np.ndarray:
    """Controllability Gramian by the given time rule; symmetric to the bit."""
    _check_T(T)
    sysm = as_system(system)
    quadrature = quadrature or Quadrature()
    mu, Q = sysm.spectrum
    s, w = quadrature.nodes(T)
    E = np.exp(-np.outer(mu, T - s))
    QB = Q.T @ sysm.B_dense
    G = (QB @ QB.T) * ((E * w) @ E.T)
    L = Q @ (0.5 * (G + G.T)) @ Q.T
    return 0.5 * (L + L.T)


def mild_solution(system, u0, v, T: float, quadrature: Quadrature | None = None) -> np.ndarray:
    """``S(T) u0 + Σ_k w_k S(T - s_k) B v_k`` for node values ``v`` of shape (m, control_dim)."""
    _check_T(T)
    sysm = as_system(system)
    quadrature = quadrature or Quadrature()
    mu, Q = sysm.spectrum
    s, w = quadrature.nodes(T)
    v = np.asarray(v, dtype=float)
    if v.shape != (len(s), sysm.control_dim):
        raise InvalidArgument(f"control has shape {v.shape}, expected {(len(s), sysm.control_dim)}")
    E = np.exp(-np.outer(mu, T - s))
    forced = (Q.T @ (sysm.B_dense @ v.T)) * E
    u_hat = np.exp(-T * mu) * (Q.T @ np.asarray(u0, dtype=float)) + forced @ w
    return Q @ u_hat


def hum_control(problem: ControlProblem) -> ControlSolve:
    """Minimal-norm (regularized) null control for one initial state."""
    return HUMSolver(problem.system, problem.T, problem.quadrature, problem.eps).solve(problem.u0)


def observed_cost(
    system,
    T: float,
    quadrature: Quadrature | None = None,
    eps: float | None = None,
    data=None,
    mode: str = "datum",
) -> float:
    """Observed cost: max per-datum cost over ``data`` (``mode="datum"``) or the
    operator norm of ``u0 -> v`` (``mode="operator"``).  Both carry the bias of ``ε``.
    """
    solver = HUMSolver(system, T, quadrature, eps)
    if mode == "operator":
        return solver.operator_cost()
    if mode != "datum":
        raise InvalidArgument(f"unknown mode {mode!r}")
    if data is None:
        raise InvalidArgument("datum mode needs a set of initial states")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return max((solver.solve(u).per_datum_cost for u in data), default=0.0)


@dataclass
class TransferReport:
    config: dict
    preconditions: list
    gramian_condition: float
    rows: list
    trajectories: list = field(repr=False, default_factory=list)
    nodes: np.ndarray | None = field(repr=False, default=None)

    @property
    def min_margin(self) -> float:
        return min((r["margin"] for r in self.rows), default=0.0)

    @property
    def max_residual_ratio(self) -> float:
        return max((r["residual_ratio"] for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return all(r["cost_ok"] and r["residual_ok"] for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "preconditions": self.preconditions,
            "gramian_condition": self.gramian_condition,
            "per_datum": self.rows,
            "min_margin": self.min_margin,
            "max_residual_ratio": self.max_residual_ratio,
            "pass": self.passed,
        }


def trajectory_csv(nodes, trajectories) -> str:
    """Long table ``datum,t,v_0,...`` of control node values."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    width = trajectories[0].shape[1] if trajectories else 0
    w.writerow(["datum", "t"] + [f"v_{j}" for j in range(width)])
    for i, v in enumerate(trajectories):
        for t, row in zip(nodes, v):
            w.writerow([i, repr(float(t))] + [repr(float(x)) for x in row])
    return buf.getvalue()


def transfer_experiment(
    half: DiscreteSystem,
    full: DiscreteSystem,
    ops: ReflectionOperators,
    T: float,
    data,
    quadrature: Quadrature | None = None,
    eps: float | None = None,
    compare_direct: bool = False,
    threads: int = 1,
    margin_tol: float = 1e-10,
) -> TransferReport:
    """Control the half system with folded controls of the mirrored full system.

    Each ``u0`` is extended to ``ũ0 = X u0 / 2``, controlled on the full
    system, and ``v = Xstar ṽ`` is applied to the half system.  Checked per
    datum: the half residual is within ``|Xstar|`` times the full residual
    (plus an intertwining-defect allowance), and ``|v|/|u0| <= |ṽ|/|ũ0|``.
    """
    _check_T(T)
    quadrature = quadrature or Quadrature()
    big, small = as_system(full), as_system(half)
    triple = triple_from_reflection(ops)
    pre = []
    gen = check_generator_intertwining(triple, big, small)
    pre.append(gen.to_dict())
    if not gen.passed:
        raise PreconditionViolation(gen.relation, gen.defect, gen.threshold)
    ctl = check_control_intertwining(triple, big, small)
    pre.append(ctl.to_dict())
    if not ctl.passed:
        raise PreconditionViolation(ctl.relation, ctl.defect, ctl.threshold)
    mism = int(np.count_nonzero(mirror_cells(ops, half.chi) != full.chi))
    pre.append({"relation": "chi_full = chi ∪ M(chi)", "defect": float(mism), "threshold": 0.0, "pass": mism == 0})
    if mism:
        raise PreconditionViolation("chi_full = chi ∪ M(chi)", float(mism), 0.0)

    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != half.n:
        raise InvalidArgument(f"data have length {data.shape[1]}, expected {half.n}")
    solver = HUMSolver(big, T, quadrature, eps)
    direct = HUMSolver(small, T, quadrature, None) if compare_direct else None
    xs_norm = operator_norm(ops.Xstar)

    def one(u0):
        u0n = float(np.linalg.norm(u0))
        ut0 = 0.5 * (ops.X @ u0)
        full_sol = solver.solve(ut0)
        v = np.asarray((ops.Xstar @ full_sol.v_trajectory.T).T)
        res = float(np.linalg.norm(mild_solution(small, u0, v, T, quadrature)))
        vn = _l2_norm(v, full_sol.weights)
        half_cost = vn / u0n if u0n > 0 else 0.0
        full_cost = full_sol.per_datum_cost
        traj_bound = T * (float(np.linalg.norm(ut0)) + math.sqrt(T) * full_sol.control_norm) * math.sqrt(full.n)
        bound = full_sol.terminal_residual * xs_norm + gen.defect * traj_bound + 1e-14 * max(u0n, 1.0)
        row = {
            "u0_norm": u0n,
            "full_cost": full_cost,
            "half_cost": half_cost,
            "margin": full_cost - half_cost,
            "full_residual": full_sol.terminal_residual,
            "half_residual": res,
            "residual_ratio": res / full_sol.terminal_residual if full_sol.terminal_residual > 0 else 0.0,
            "residual_bound": bound,
            "residual_ok": res <= bound,
            "cost_ok": half_cost <= full_cost + margin_tol,
        }
        if direct is not None:
            row["direct_half_cost"] = direct.solve(u0).per_datum_cost
        return row, v

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, data))
    else:
        out = [one(u) for u in data]
    rows = []
    for i, (row, _) in enumerate(out):
        rows.append({"index": i, **row})
    config = {
        "T": float(T),
        "quadrature": quadrature.to_dict(),
        "eps": solver.eps,
        "bc": full.bc,
        "n_half": half.n,
        "n_full": full.n,
        "n_data": int(data.shape[0]),
        "control_cells_half": int(np.count_nonzero(half.chi)),
        "control_cells_full": int(np.count_nonzero(full.chi)),
        "xstar_norm": xs_norm,
        "norm_product": triple.norms["product"],
    }
    return TransferReport(config, pre, solver.condition, rows, [v for _, v in out], solver.s)
