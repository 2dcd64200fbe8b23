"""Explicit upper bounds on the null-control cost of heat-type equations.

Every bound is evaluated as a natural logarithm first; the linear value is
``exp(log_value)`` with an overflow flag when it is not representable.

The universal constants ``K`` (thick control sets) and ``D(d)``
(equidistributed control sets) have no published numerical values.  They
are explicit inputs with a placeholder default of 1, and every result echoes
the constants it was computed with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import DomainError, InvalidArgument
from .geometry import ThicknessParams, iterate_sector_symmetrization, sector_params

__all__ = [
    "UniversalConstants",
    "PotentialNorms",
    "BoundResult",
    "cost_bound_thick",
    "cost_bound_domain",
    "cost_bound_fractional",
    "cost_bound_equidistributed",
    "cost_bound_equidistributed_domain",
    "sector_bound_via_orthant",
    "THICK_DOMAINS",
    "EQUIDISTRIBUTED_DOMAINS",
]

THICK_DOMAINS = ("halfspace", "orthant", "sector", "triangle", "prism")
EQUIDISTRIBUTED_DOMAINS = ("sector", "triangle", "prism")


@dataclass(frozen=True)
class UniversalConstants:
    """Constants ``K`` and ``D(d)``.  Unlisted dimensions use ``D_default``."""

    K: float = 1.0
    D: Mapping[int, float] = field(default_factory=dict)
    D_default: float = 1.0

    def __post_init__(self):
        if not self.K > 0:
            raise InvalidArgument("K must be positive")
        if not self.D_default > 0 or any(not v > 0 for v in self.D.values()):
            raise InvalidArgument("D(d) must be positive")

    def D_of(self, d: int) -> float:
        return float(self.D.get(d, self.D_default))

    @property
    def R(self) -> float:
        """``max(D(2), D(3))``, used for triangles and prisms."""
        return max(self.D_of(2), self.D_of(3))

    def to_dict(self) -> dict:
        return {"K": self.K, "D": {str(k): v for k, v in sorted(self.D.items())}, "D_default": self.D_default}


@dataclass(frozen=True)
class PotentialNorms:
    """``||V||_inf`` and ``||V_-||_inf`` of the potential."""

    sup_norm: float = 0.0
    neg_sup_norm: float = 0.0

    def __post_init__(self):
        if not (0 <= self.neg_sup_norm <= self.sup_norm):
            raise InvalidArgument("need 0 <= ||V_-||_inf <= ||V||_inf")


@dataclass(frozen=True)
class BoundResult:
    log_value: float
    formula_tag: str
    inputs: Mapping

    @property
    def overflow(self) -> bool:
        return self.log_value > _LOG_MAX

    @property
    def value(self) -> float:
        return math.inf if self.overflow else math.exp(self.log_value)

    def to_dict(self) -> dict:
        return {
            "formula_tag": self.formula_tag,
            **self.inputs,
            "log_value": self.log_value,
            "value": self.value,
            "overflow": self.overflow,
        }


_LOG_MAX = math.log(1.7976931348623157e308)


def _check_T(T):
    if not (T > 0 and math.isfinite(T)):
        raise InvalidArgument(f"T must be positive and finite, got {T!r}")


def _check_thick(gamma, a):
    if not (0 < gamma <= 1):
        raise InvalidArgument(f"gamma must lie in (0, 1], got {gamma!r}")
    if len(a) == 0 or any(not aj > 0 for aj in a):
        raise InvalidArgument("all components of a must be positive")


def _log_arg(log_c: float, what: str) -> float:
    # the bounds are stated for K^d / gamma >= 1
    if log_c < 0:
        raise DomainError(f"ln({what}) = {log_c:.6g} < 0; the bound needs a larger K")
    return log_c


def _thick_log(K, d, log_c, weight, T, exp_power=2.0, time_power=1.0):
    """``-ln T / 2 + (K d / 2) ln c + K w (ln c)^p / (2 T^q)`` with ``w = ||a||^2``-type weight."""
    return (
        -0.5 * math.log(T)
        + 0.5 * K * d * log_c
        + K * weight * log_c**exp_power / (2.0 * T**time_power)
    )


def _echo(consts: UniversalConstants, **kw) -> dict:
    out = {}
    for k, v in kw.items():
        if isinstance(v, (tuple, list)):
            v = [float(x) for x in v]
        out[k] = v
    out["constants"] = consts.to_dict()
    return out


def cost_bound_thick(gamma, a: Sequence[float], T: float, consts: UniversalConstants | None = None) -> BoundResult:
    """Cost bound on ``R^d`` or a cube for a ``(gamma, a)``-thick control set.

    ``C_T <= T^{-1/2} (K^d/gamma)^{K d/2} exp(K ||a||_1^2 ln^2(K^d/gamma) / (2T))``.
    The dimension is ``len(a)``.
    """
    consts = consts or UniversalConstants()
    a = tuple(float(v) for v in a)
    _check_thick(gamma, a)
    _check_T(T)
    K, d = consts.K, len(a)
    log_c = _log_arg(d * math.log(K) - math.log(gamma), "K^d/gamma")
    a1 = math.fsum(a)
    return BoundResult(
        _thick_log(K, d, log_c, a1 * a1, T),
        "thick",
        _echo(consts, gamma=float(gamma), a=a, T=T, d=d),
    )


def cost_bound_fractional(
    gamma, a: Sequence[float], T: float, theta: float, consts: UniversalConstants | None = None
) -> BoundResult:
    """Thick-set bound for the fractional heat equation with ``(-Δ)^theta``, ``theta > 1/2``.

    The Gaussian exponent ``||a||^2 ln^2 c / T`` becomes
    ``(||a|| ln c)^{2θ/(2θ-1)} / T^{1/(2θ-1)}``.  The prefactor
    ``(K^d/gamma)^{Kd/2}`` is kept unchanged; whether the source result
    modifies it is not known.
    """
    consts = consts or UniversalConstants()
    if not theta > 0.5:
        raise InvalidArgument(f"theta must exceed 1/2, got {theta!r}")
    a = tuple(float(v) for v in a)
    _check_thick(gamma, a)
    _check_T(T)
    K, d = consts.K, len(a)
    log_c = _log_arg(d * math.log(K) - math.log(gamma), "K^d/gamma")
    a1 = math.fsum(a)
    p = 2 * theta / (2 * theta - 1)
    q = 1 / (2 * theta - 1)
    log_value = -0.5 * math.log(T) + 0.5 * K * d * log_c + K * (a1 * log_c) ** p / (2.0 * T**q)
    return BoundResult(
        log_value,
        "fractional",
        _echo(consts, gamma=float(gamma), a=a, T=T, d=d, theta=theta),
    )


def cost_bound_domain(
    kind: str,
    gamma,
    a: Sequence[float],
    T: float,
    consts: UniversalConstants | None = None,
    n: int | None = None,
) -> BoundResult:
    """Thick-set cost bounds on half-spaces, orthants, sectors, triangles and prisms.

    ``kind`` is one of ``halfspace``, ``orthant``, ``sector`` (angle
    ``pi/2^n``, needs ``n >= 2`` and ``d = 2``), ``triangle`` (``d = 2``) or
    ``prism`` (``d = 3``).  ``a`` holds the parameters of the original set;
    the sector, triangle and prism formulas use the transformed parameters of
    the sector reflection.  For triangles and prisms the caller vouches for
    ``2 sqrt(a1^2 + a2^2) <= L`` and ``a_j <= L``; the inputs carry no ``L``.
    """
    consts = consts or UniversalConstants()
    a = tuple(float(v) for v in a)
    _check_thick(gamma, a)
    _check_T(T)
    K, d = consts.K, len(a)
    lnK, ln2 = math.log(K), math.log(2.0)

    if kind == "halfspace":
        log_c = _log_arg(ln2 + d * lnK - math.log(gamma), "2K^d/gamma")
        w = 2 * a[0] + math.fsum(a[1:])
        log_value = _thick_log(K, d, log_c, w * w, T)
        echo = _echo(consts, gamma=float(gamma), a=a, T=T, d=d)
    elif kind == "orthant":
        log_c = _log_arg(d * (ln2 + lnK) - math.log(gamma), "(2K)^d/gamma")
        a1 = math.fsum(a)
        log_value = _thick_log(K, d, log_c, 4 * a1 * a1, T)
        echo = _echo(consts, gamma=float(gamma), a=a, T=T, d=d)
    elif kind == "sector":
        if d != 2:
            raise InvalidArgument("the sector bound is two-dimensional")
        if n is None or n < 2:
            raise InvalidArgument("the sector bound needs n >= 2")
        tp = sector_params(ThicknessParams(gamma, a))
        gt, at = float(tp.gamma), tp.a
        scale = 2.0 ** (3 * n - 4)
        log_c = _log_arg((3 * n - 4) * ln2 + 2 * lnK - math.log(gt), "2^(3n-4) K^2 / gamma~")
        a1 = math.fsum(at)
        log_value = -0.5 * math.log(T) + K * log_c + scale * K * a1 * a1 * log_c**2 / (2.0 * T)
        echo = _echo(consts, gamma=float(gamma), a=a, T=T, d=d, n=n, gamma_tilde=gt, a_tilde=at)
    elif kind in ("triangle", "prism"):
        want = 2 if kind == "triangle" else 3
        if d != want:
            raise InvalidArgument(f"the {kind} bound needs d = {want}, got {d}")
        tp = sector_params(ThicknessParams(gamma, a))
        gt, at = float(tp.gamma), tp.a
        log_c = _log_arg(d * lnK - math.log(gt), "K^d/gamma~")
        a1 = math.fsum(at)
        log_value = _thick_log(K, d, log_c, a1 * a1, T)
        echo = _echo(
            consts, gamma=float(gamma), a=a, T=T, d=d, gamma_tilde=gt, a_tilde=at,
            scale_assumption="2*sqrt(a1^2+a2^2) <= L and a_j <= L (asserted by caller)",
        )
    else:
        raise InvalidArgument(f"unknown domain kind {kind!r}; expected one of {THICK_DOMAINS}")
    return BoundResult(log_value, kind, echo)


def sector_bound_via_orthant(gamma, a, T, n: int, consts: UniversalConstants | None = None) -> BoundResult:
    """Sector bound recomputed as the orthant bound at the iterated sector parameters.

    Independent code path used to cross-check :func:`cost_bound_domain`.
    """
    tp = iterate_sector_symmetrization(sector_params(ThicknessParams(gamma, tuple(a))), n)
    return cost_bound_domain("orthant", float(tp.gamma), tp.a, T, consts)


def cost_bound_equidistributed(
    G: float,
    delta: float,
    T: float,
    norms: PotentialNorms | None = None,
    d: int = 2,
    consts: UniversalConstants | None = None,
    D: float | None = None,
) -> BoundResult:
    """Cost bound for a ``(G, delta)``-equidistributed control set.

    ``C_T <= (δ/G)^{-D(1 + G^{4/3} ||V||^{2/3})} D T^{-1/2}
    exp(D G^2 ln^2(δ/G) / (2T) + ||V_-|| T)`` with ``D = D(d)`` unless
    overridden.
    """
    consts = consts or UniversalConstants()
    norms = norms or PotentialNorms()
    if not G > 0:
        raise InvalidArgument("G must be positive")
    if not (0 < delta < G / 2):
        raise InvalidArgument(f"need 0 < delta < G/2, got delta={delta}, G={G}")
    _check_T(T)
    D = consts.D_of(d) if D is None else float(D)
    if not D > 0:
        raise InvalidArgument("D must be positive")
    log_ratio = math.log(delta) - math.log(G)
    exponent = D * (1 + G ** (4 / 3) * norms.sup_norm ** (2 / 3))
    log_value = (
        -exponent * log_ratio
        + math.log(D)
        - 0.5 * math.log(T)
        + D * G * G * log_ratio**2 / (2.0 * T)
        + norms.neg_sup_norm * T
    )
    echo = _echo(
        consts, G=G, delta=delta, T=T, d=d, D_used=D,
        V_sup=norms.sup_norm, V_neg_sup=norms.neg_sup_norm,
    )
    return BoundResult(log_value, "equidistributed", echo)


def cost_bound_equidistributed_domain(
    kind: str,
    G: float,
    delta: float,
    T: float,
    norms: PotentialNorms | None = None,
    consts: UniversalConstants | None = None,
    n: int | None = None,
) -> BoundResult:
    """Equidistributed-set bounds on sectors of angle ``pi/2^n`` and on triangles/prisms.

    Sectors use scale ``4^(n-1) G`` with ``D(2)``; triangles and prisms use
    ``2G`` with ``max(D(2), D(3))`` (caller vouches for ``L >= 2G``).
    """
    consts = consts or UniversalConstants()
    if kind == "sector":
        if n is None or n < 2:
            raise InvalidArgument("the sector bound needs n >= 2")
        scale, D, d = 4.0 ** (n - 1) * G, consts.D_of(2), 2
    elif kind in ("triangle", "prism"):
        scale, D, d = 2.0 * G, consts.R, 2 if kind == "triangle" else 3
    else:
        raise InvalidArgument(f"unknown domain kind {kind!r}; expected one of {EQUIDISTRIBUTED_DOMAINS}")
    if not (0 < delta < G / 2):
        raise InvalidArgument(f"need 0 < delta < G/2, got delta={delta}, G={G}")
    base = cost_bound_equidistributed(scale, delta, T, norms, d, consts, D=D)
    inputs = dict(base.inputs)
    inputs.update(G=G, G_scaled=scale, n=n)
    return BoundResult(base.log_value, f"equidistributed-{kind}", inputs)
