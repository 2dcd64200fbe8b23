"""Finite-dimensional checks of the abstract transfer argument.

A pair of systems ``(H_big, B_big)`` and ``(H_small, B_small)`` is related by
bounded maps ``Y`` (big -> small state), ``Yhat`` (a right inverse of ``Y``)
and ``Z`` (big -> small control).  If ``Y H_big = H_small Y`` and
``Y B_big = B_small Z``, every null control of the big system maps to a null
control of the small one, and the cost grows at most by ``|Yhat| |Z|``.
The functions below measure each relation as a max-abs defect; semigroups
and other functions of symmetric generators come from eigendecompositions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, InvalidArgument

__all__ = [
    "AbstractSystem",
    "IntertwinerTriple",
    "DefectReport",
    "operator_norm",
    "check_generator_intertwining",
    "check_control_intertwining",
    "check_semigroup_commutation",
    "spectral_intertwining",
    "fractional_power",
    "triple_from_reflection",
]


def _dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


def _max_abs(M) -> float:
    if sp.issparse(M):
        return float(abs(M).max()) if M.nnz else 0.0
    M = np.asarray(M)
    return float(np.max(np.abs(M))) if M.size else 0.0


def operator_norm(M) -> float:
    """Spectral norm; sparse inputs use a Lanczos estimate of ``|M^T M|``."""
    if sp.issparse(M) and min(M.shape) > 200:
        M = sp.csr_matrix(M, dtype=float)
        G = (M.T @ M) if M.shape[0] >= M.shape[1] else (M @ M.T)
        val = spla.eigsh(G, k=1, which="LA", return_eigenvectors=False, tol=1e-14)[0]
        return math.sqrt(max(val, 0.0))
    return float(np.linalg.norm(_dense(M), 2))


@dataclass(frozen=True, eq=False)
class AbstractSystem:
    """``u' + H u = B v`` with a (dense or sparse) square ``H``."""

    H: object
    B: object

    def __post_init__(self):
        H, B = self.H, self.B
        if H.shape[0] != H.shape[1]:
            raise InvalidArgument("H must be square")
        if B.shape[0] != H.shape[0]:
            raise InvalidArgument("B must map into the state space")

    @classmethod
    def from_discrete(cls, system) -> "AbstractSystem":
        return cls(system.H, system.B)

    @property
    def space_dim(self) -> int:
        return self.H.shape[0]

    @property
    def control_dim(self) -> int:
        return self.B.shape[1]

    @cached_property
    def H_dense(self) -> np.ndarray:
        return _dense(self.H)

    @cached_property
    def B_dense(self) -> np.ndarray:
        return _dense(self.B)

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthonormal eigenvectors of ``H``."""
        H = self.H_dense
        asym = float(np.max(np.abs(H - H.T))) if H.size else 0.0
        if asym > 1e-12 * max(1.0, _max_abs(H)):
            raise InvalidArgument(f"H is not symmetric (asymmetry {asym:.3e})")
        return np.linalg.eigh(0.5 * (H + H.T))

    def apply_function(self, phi: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        mu, Q = self.spectrum
        with np.errstate(all="ignore"):
            vals = np.asarray(phi(mu), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise DomainError("function is not finite on the spectrum")
        return (Q * vals) @ Q.T

    def semigroup(self, t: float) -> np.ndarray:
        if not math.isfinite(t) or t < 0:
            raise InvalidArgument(f"time must be finite and non-negative, got {t!r}")
        if t == 0:
            return np.eye(self.space_dim)
        return self.apply_function(lambda mu: np.exp(-t * mu))


@dataclass(frozen=True, eq=False)
class IntertwinerTriple:
    """``Y`` (big -> small), right inverse ``Yhat`` and control map ``Z``."""

    Y: object
    Yhat: object
    Z: object
    declared_norm_product: float | None = None
    norms: dict = field(default_factory=dict)

    def __post_init__(self):
        Y, Yhat = self.Y, self.Yhat
        if Y.shape[1] != Yhat.shape[0] or Y.shape[0] != Yhat.shape[1]:
            raise InvalidArgument("Y and Yhat have incompatible shapes")
        err = _max_abs(_dense(Y @ Yhat) - np.eye(Y.shape[0]))
        if err > 1e-12:
            raise InvalidArgument(f"Yhat is not a right inverse of Y (defect {err:.3e})")
        norms = {"Yhat": operator_norm(Yhat), "Z": operator_norm(self.Z)}
        norms["product"] = norms["Yhat"] * norms["Z"]
        if self.declared_norm_product is not None:
            if abs(norms["product"] - self.declared_norm_product) > 1e-12:
                raise InvalidArgument(
                    f"|Yhat| |Z| = {norms['product']!r} differs from declared {self.declared_norm_product!r}"
                )
        self.norms.update(norms)


def triple_from_reflection(ops) -> IntertwinerTriple:
    """``Y = Z = Xstar`` and ``Yhat = X / 2``, whose norm product is 1."""
    return IntertwinerTriple(ops.Xstar, ops.X * 0.5, ops.Xstar, declared_norm_product=1.0)


@dataclass
class DefectReport:
    relation: str
    defect: float
    threshold: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.defect <= self.threshold

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {
            "relation": self.relation,
            "defect": self.defect,
            "threshold": self.threshold,
            "pass": self.passed,
            **self.details,
        }


def _check_shapes(t: IntertwinerTriple, big: AbstractSystem, small: AbstractSystem):
    if t.Y.shape != (small.space_dim, big.space_dim):
        raise InvalidArgument(f"Y has shape {t.Y.shape}, expected {(small.space_dim, big.space_dim)}")
    if t.Z.shape != (small.control_dim, big.control_dim):
        raise InvalidArgument(f"Z has shape {t.Z.shape}, expected {(small.control_dim, big.control_dim)}")


def check_generator_intertwining(t: IntertwinerTriple, big: AbstractSystem, small: AbstractSystem) -> DefectReport:
    """``max |Y H_big - H_small Y|`` against ``1e-12 max(|H|_max)``."""
    _check_shapes(t, big, small)
    D = t.Y @ big.H - small.H @ t.Y
    scale = max(_max_abs(big.H), _max_abs(small.H))
    return DefectReport("Y H_big = H_small Y", _max_abs(D), 1e-12 * scale)


def check_control_intertwining(t: IntertwinerTriple, big: AbstractSystem, small: AbstractSystem) -> DefectReport:
    """``max |Y B_big - B_small Z|`` against ``1e-12`` times the larger side."""
    _check_shapes(t, big, small)
    left = t.Y @ big.B
    right = small.B @ t.Z
    scale = max(_max_abs(left), _max_abs(right))
    return DefectReport("Y B_big = B_small Z", _max_abs(left - right), 1e-12 * scale)


def check_semigroup_commutation(
    t: IntertwinerTriple, big: AbstractSystem, small: AbstractSystem, times: Sequence[float]
) -> DefectReport:
    """``max_t max |Y exp(-t H_big) - exp(-t H_small) Y|`` against ``1e-10 |Y|``.

    Usable on its own, without the generator relation.
    """
    _check_shapes(t, big, small)
    Y = _dense(t.Y)
    per_time = []
    for s in times:
        if not math.isfinite(s):
            raise InvalidArgument(f"non-finite time {s!r}")
        per_time.append(_max_abs(Y @ big.semigroup(s) - small.semigroup(s) @ Y))
    threshold = 1e-10 * operator_norm(t.Y)
    return DefectReport(
        "Y S_big(t) = S_small(t) Y",
        max(per_time, default=0.0),
        threshold,
        {"times": [float(s) for s in times], "per_time": per_time},
    )


def fractional_power(theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """``s -> s^theta`` on ``[0, inf)`` and 0 below."""

    def phi(s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, np.abs(s) ** theta, 0.0)

    phi.__name__ = f"power_{theta:g}"
    return phi


def spectral_intertwining(
    t: IntertwinerTriple,
    big: AbstractSystem,
    small: AbstractSystem,
    phi: Callable[[np.ndarray], np.ndarray],
    lam_grid: Sequence[float] = (),
    threshold: float = 1e-10,
) -> DefectReport:
    """``max |Y phi(H_big) - phi(H_small) Y|`` plus spectral-projector checks.

    For each ``lam`` in ``lam_grid`` the projectors ``1_{(-inf, lam]}(H)`` are
    compared as well; grid points within 1e-8 of an eigenvalue of either
    operator are skipped because the discrete spectral family jumps there.
    """
    _check_shapes(t, big, small)
    Y = _dense(t.Y)
    defect = _max_abs(Y @ big.apply_function(phi) - small.apply_function(phi) @ Y)
    eig = np.concatenate([big.spectrum[0], small.spectrum[0]])
    used, skipped, proj = [], [], []
    for lam in lam_grid:
        if np.min(np.abs(eig - lam)) < 1e-8:
            skipped.append(float(lam))
            continue

        def step(mu, lam=lam):
            return (mu <= lam).astype(float)

        used.append(float(lam))
        proj.append(_max_abs(Y @ big.apply_function(step) - small.apply_function(step) @ Y))
    return DefectReport(
        "Y phi(H_big) = phi(H_small) Y",
        max([defect] + proj),
        threshold,
        {"function_defect": defect, "lambdas": used, "skipped": skipped, "projector_defects": proj},
    )
