"""Control-set geometry.

Sets are represented as indicator oracles over points of R^d together with
a structural description (``kind`` + ``params``) that makes them
serializable and lets the symmetrization constructions compose.  Points are
passed as arrays of shape ``(d,)`` or ``(N, d)``.

Thickness parameters ``(gamma, a)`` and equidistribution parameters
``(G, delta)`` are tracked separately from the sets: symmetrization
transforms them by exact algebraic maps, and :func:`estimate_thickness`
provides an independent sampled check of those maps on concrete sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "HyperplaneSpec",
    "RegionSet",
    "ThicknessParams",
    "EquidistParams",
    "ThicknessReport",
    "full_space",
    "empty_set",
    "periodic_boxes",
    "periodic_slabs",
    "ball_lattice",
    "custom_set",
    "clip",
    "union",
    "reflected",
    "abs_pullback",
    "symmetrize",
    "reflect_point",
    "halfspace_params",
    "orthant_params",
    "sector_params",
    "symmetrize_halfspace",
    "symmetrize_orthant",
    "symmetrize_sector",
    "iterate_sector_symmetrization",
    "estimate_thickness",
    "certify_thickness",
    "verify_equidistributed",
    "symmetrize_equidistributed",
]

_QUARTER_PI = math.pi / 4


@dataclass(frozen=True)
class HyperplaneSpec:
    """Reflection hyperplane.

    ``kind="coordinate"`` is the plane ``{x_axis = 0}``; the retained
    half-space is ``x_axis >= 0``.  ``kind="sector"`` is the boundary of
    ``H_theta = {x_2 < tan(theta) x_1}`` acting in the first two
    coordinates; the retained side is ``H_theta`` itself.
    """

    kind: str = "coordinate"
    axis: int = 0
    theta: float = 0.0
    dim: int | None = None

    def __post_init__(self):
        if self.kind == "coordinate":
            if self.axis < 0 or (self.dim is not None and self.axis >= self.dim):
                raise InvalidArgument(f"axis {self.axis} invalid for dimension {self.dim}")
        elif self.kind == "sector":
            if not (0.0 <= self.theta < math.pi / 2):
                raise InvalidArgument(f"sector angle must lie in [0, pi/2), got {self.theta!r}")
            if self.dim is not None and self.dim < 2:
                raise InvalidArgument("sector reflections need dimension >= 2")
        else:
            raise InvalidArgument(f"unknown hyperplane kind {self.kind!r}")

    @classmethod
    def coordinate(cls, axis: int = 0, dim: int | None = None) -> "HyperplaneSpec":
        return cls("coordinate", axis=axis, dim=dim)

    @classmethod
    def sector(cls, theta: float, dim: int | None = None) -> "HyperplaneSpec":
        return cls("sector", theta=float(theta), dim=dim)

    def side(self, x: np.ndarray) -> np.ndarray:
        """Signed quantity that is positive on the retained side."""
        x = np.asarray(x, dtype=float)
        if self.kind == "coordinate":
            return x[..., self.axis]
        return x[..., 0] * math.sin(self.theta) - x[..., 1] * math.cos(self.theta)

    def to_dict(self) -> dict:
        if self.kind == "coordinate":
            return {"kind": "coordinate", "axis": self.axis}
        return {"kind": "sector", "theta": self.theta}

    @classmethod
    def from_dict(cls, data: Mapping) -> "HyperplaneSpec":
        if data["kind"] == "coordinate":
            return cls.coordinate(int(data.get("axis", 0)))
        return cls.sector(float(data["theta"]))


def _check_dim(x: np.ndarray, h: HyperplaneSpec) -> int:
    d = x.shape[-1]
    if h.dim is not None and d != h.dim:
        raise InvalidArgument(f"point dimension {d} does not match hyperplane dimension {h.dim}")
    if h.kind == "coordinate" and h.axis >= d:
        raise InvalidArgument(f"axis {h.axis} out of range for dimension {d}")
    if h.kind == "sector" and d < 2:
        raise InvalidArgument("sector reflection needs at least two coordinates")
    return d


def reflect_point(x, h: HyperplaneSpec) -> np.ndarray:
    """Mirror image of ``x`` across the hyperplane ``h``.

    Coordinate reflections and the angles 0 and pi/4 are computed exactly
    (sign flip, coordinate swap); other sector angles use the Householder
    map ``x - 2 <n, x> n`` with unit normal ``n = (sin t, -cos t, 0, ...)``.
    """
    x = np.asarray(x, dtype=float)
    _check_dim(x, h)
    y = np.array(x, dtype=float, copy=True)
    if h.kind == "coordinate":
        y[..., h.axis] = -x[..., h.axis]
        return y
    if h.theta == 0.0:
        y[..., 1] = -x[..., 1]
    elif h.theta == _QUARTER_PI:
        y[..., 0] = x[..., 1]
        y[..., 1] = x[..., 0]
    else:
        s, c = math.sin(h.theta), math.cos(h.theta)
        proj = x[..., 0] * s - x[..., 1] * c
        y[..., 0] = x[..., 0] - 2.0 * proj * s
        y[..., 1] = x[..., 1] + 2.0 * proj * c
    return y


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True, eq=False)
class RegionSet:
    """Measurable subset of R^d given by an indicator plus its structure.

    Use the factory functions (:func:`periodic_boxes`, :func:`union`, ...)
    rather than constructing instances directly.  Boundary points are
    counted as members.
    """

    dimension: int
    kind: str
    params: Mapping = field(default_factory=dict)
    indicator_fn: Callable[[np.ndarray], np.ndarray] | None = None
    bounding_note: str | None = None

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[-1] != self.dimension:
            raise InvalidArgument(
                f"points have dimension {pts.shape[-1]}, set has dimension {self.dimension}"
            )
        out = _CONTAINS[self.kind](self, pts)
        return bool(out[0]) if single else out

    __call__ = contains

    @property
    def is_periodic(self) -> bool:
        return self.kind == "periodic_boxes"

    @property
    def period(self) -> np.ndarray | None:
        if self.kind == "periodic_boxes":
            return np.asarray(self.params["period"], dtype=float)
        return None

    def to_dict(self) -> dict:
        p = self.params
        out: dict = {"kind": self.kind, "dimension": self.dimension}
        if self.kind == "periodic_boxes":
            out["period"] = list(p["period"])
            out["boxes"] = [[list(lo), list(hi)] for lo, hi in p["boxes"]]
        elif self.kind == "ball_lattice":
            out["G"] = p["G"]
            out["delta"] = p["delta"]
            offsets = p["offsets"]
            out["offsets"] = None if offsets is None else np.asarray(offsets).tolist()
        elif self.kind in ("clipped", "reflected"):
            out["base"] = p["base"].to_dict()
            out["hyperplane"] = p["hyperplane"].to_dict()
        elif self.kind == "union":
            out["members"] = [m.to_dict() for m in p["members"]]
        elif self.kind == "abs_pullback":
            out["base"] = p["base"].to_dict()
        elif self.kind == "custom":
            raise InvalidArgument("custom indicator sets cannot be serialized")
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "RegionSet":
        kind = data["kind"]
        d = int(data.get("dimension", 0))
        if kind == "full":
            return full_space(d)
        if kind == "empty":
            return empty_set(d)
        if kind == "periodic_boxes":
            return periodic_boxes(data["period"], [tuple(b) for b in data["boxes"]])
        if kind == "periodic_slabs":
            return periodic_slabs(
                float(data["width"]),
                float(data.get("period", 1.0)),
                d or 2,
                int(data.get("axis", 0)),
            )
        if kind == "ball_lattice":
            return ball_lattice(data["G"], data["delta"], d, data.get("offsets"))
        if kind == "clipped":
            return clip(cls.from_dict(data["base"]), HyperplaneSpec.from_dict(data["hyperplane"]))
        if kind == "reflected":
            return reflected(cls.from_dict(data["base"]), HyperplaneSpec.from_dict(data["hyperplane"]))
        if kind == "union":
            return union(*[cls.from_dict(m) for m in data["members"]])
        if kind == "abs_pullback":
            return abs_pullback(cls.from_dict(data["base"]))
        raise InvalidArgument(f"unknown set kind {kind!r}")


def _contains_periodic(s: RegionSet, pts):
    period = np.asarray(s.params["period"], dtype=float)
    y = np.mod(pts, period)
    out = np.zeros(len(pts), dtype=bool)
    for lo, hi in s.params["boxes"]:
        out |= np.all((y >= lo) & (y <= hi), axis=1)
    return out


def _contains_balls(s: RegionSet, pts):
    G, delta = s.params["G"], s.params["delta"]
    j = np.floor(pts / G)
    offsets = s.params["offsets"]
    if offsets is None:
        z = G * j + 0.5 * G
    else:
        offsets = np.asarray(offsets, dtype=float)
        pattern = np.array(offsets.shape[:-1])
        idx = tuple(np.mod(j, pattern).astype(int).T)
        z = G * j + offsets[idx]
    return np.sum((pts - z) ** 2, axis=1) <= delta * delta


_CONTAINS: dict[str, Callable[[RegionSet, np.ndarray], np.ndarray]] = {
    "full": lambda s, p: np.ones(len(p), dtype=bool),
    "empty": lambda s, p: np.zeros(len(p), dtype=bool),
    "periodic_boxes": _contains_periodic,
    "ball_lattice": _contains_balls,
    "clipped": lambda s, p: (s.params["hyperplane"].side(p) >= 0) & s.params["base"].contains(p),
    "reflected": lambda s, p: s.params["base"].contains(reflect_point(p, s.params["hyperplane"])),
    "union": lambda s, p: np.logical_or.reduce([m.contains(p) for m in s.params["members"]]),
    "abs_pullback": lambda s, p: s.params["base"].contains(np.abs(p)),
    "custom": lambda s, p: np.asarray(s.indicator_fn(p), dtype=bool),
}


def full_space(d: int) -> RegionSet:
    return RegionSet(d, "full")


def empty_set(d: int) -> RegionSet:
    return RegionSet(d, "empty")


def periodic_boxes(period: Sequence[float], boxes: Sequence[tuple]) -> RegionSet:
    """Union of closed boxes repeated with the given period.

    Each box is ``(lo, hi)`` with coordinates inside one period cell
    ``[0, period)``; boxes crossing the cell boundary must be split.
    """
    period = tuple(float(p) for p in period)
    if any(p <= 0 for p in period):
        raise InvalidArgument("period components must be positive")
    d = len(period)
    norm_boxes = []
    for lo, hi in boxes:
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != d or len(hi) != d:
            raise InvalidArgument("box dimension does not match period")
        norm_boxes.append((lo, hi))
    return RegionSet(d, "periodic_boxes", {"period": period, "boxes": tuple(norm_boxes)})


def periodic_slabs(width: float, period: float = 1.0, d: int = 2, axis: int = 0) -> RegionSet:
    """Slabs ``[k p, k p + width]`` along ``axis``, unbounded in the others."""
    lo = [0.0] * d
    hi = [period] * d
    hi[axis] = width
    return periodic_boxes([period] * d, [(lo, hi)])


def ball_lattice(G: float, delta: float, d: int, offsets=None) -> RegionSet:
    """Union of closed balls ``B(z_j, delta)``, one per cell ``G j + (0, G)^d``.

    ``offsets`` is ``None`` (balls at the cell centers) or an array of shape
    ``(*pattern, d)`` holding ``z_j - G j`` for ``j`` modulo ``pattern``.
    """
    if G <= 0 or not (0 < delta < G / 2):
        raise InvalidArgument("ball lattice needs G > 0 and 0 < delta < G/2")
    if offsets is not None:
        offsets = np.asarray(offsets, dtype=float)
        if offsets.shape[-1] != d or offsets.ndim != d + 1:
            raise InvalidArgument("offsets must have shape (*pattern, d)")
    return RegionSet(d, "ball_lattice", {"G": float(G), "delta": float(delta), "offsets": offsets})


def custom_set(d: int, indicator: Callable[[np.ndarray], np.ndarray], note: str | None = None) -> RegionSet:
    """Set from a vectorized indicator mapping ``(N, d)`` points to booleans."""
    return RegionSet(d, "custom", {}, indicator_fn=indicator, bounding_note=note)


def clip(base: RegionSet, h: HyperplaneSpec) -> RegionSet:
    """Intersection of ``base`` with the retained (closed) side of ``h``."""
    _check_dim(np.zeros(base.dimension), h)
    return RegionSet(base.dimension, "clipped", {"base": base, "hyperplane": h})


def reflected(base: RegionSet, h: HyperplaneSpec) -> RegionSet:
    _check_dim(np.zeros(base.dimension), h)
    return RegionSet(base.dimension, "reflected", {"base": base, "hyperplane": h})


def union(*members: RegionSet) -> RegionSet:
    if not members:
        raise InvalidArgument("union of no sets")
    d = members[0].dimension
    if any(m.dimension != d for m in members):
        raise InvalidArgument("union members must share a dimension")
    return RegionSet(d, "union", {"members": tuple(members)})


def abs_pullback(base: RegionSet) -> RegionSet:
    """``{x : (|x_1|, ..., |x_d|) in base}``."""
    return RegionSet(base.dimension, "abs_pullback", {"base": base})


def symmetrize(S: RegionSet, h: HyperplaneSpec) -> RegionSet:
    """``S' ∪ M(S')`` with ``S'`` the part of ``S`` on the retained side of ``h``."""
    kept = clip(S, h)
    return union(kept, reflected(kept, h))


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ThicknessParams:
    """``(gamma, a)`` thickness parameters with the chain of transforms applied."""

    gamma: float | Fraction
    a: tuple
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(self.a))
        if not (0 < self.gamma <= 1):
            raise InvalidArgument(f"gamma must lie in (0, 1], got {self.gamma!r}")
        if not self.a or any(not (aj > 0) for aj in self.a):
            raise InvalidArgument(f"all lengths must be positive, got {self.a!r}")

    @property
    def dimension(self) -> int:
        return len(self.a)

    def to_dict(self) -> dict:
        return {
            "gamma": float(self.gamma),
            "a": [float(v) for v in self.a],
            "provenance": list(self.provenance),
        }


@dataclass(frozen=True)
class EquidistParams:
    """``(G, delta)`` parameters of an equidistributed set."""

    G: float
    delta: float
    provenance: tuple[str, ...] = ()

    def __post_init__(self):
        if not (self.G > 0 and 0 < self.delta < self.G / 2):
            raise InvalidArgument(f"need G > 0 and 0 < delta < G/2, got G={self.G}, delta={self.delta}")

    def to_dict(self) -> dict:
        return {"G": self.G, "delta": self.delta, "provenance": list(self.provenance)}


def halfspace_params(p: ThicknessParams) -> ThicknessParams:
    """Parameters after symmetrizing across ``{x_1 = 0}``: ``(gamma/2, (2 a_1, a_2, ...))``."""
    return ThicknessParams(p.gamma / 2, (2 * p.a[0],) + p.a[1:], p.provenance + ("halfspace",))


def orthant_params(p: ThicknessParams) -> ThicknessParams:
    """Parameters of the absolute-value pullback: ``(gamma / 2^d, 2a)``."""
    return ThicknessParams(
        p.gamma / 2 ** p.dimension, tuple(2 * aj for aj in p.a), p.provenance + ("orthant",)
    )


def sector_params(p: ThicknessParams) -> ThicknessParams:
    """Parameters after symmetrizing across a sector boundary (any angle).

    ``gamma a1 a2 / (4 (a1^2 + a2^2))`` stays exact for Fraction inputs; the
    new side length ``2 sqrt(a1^2 + a2^2)`` is a float.
    """
    if p.dimension < 2:
        raise InvalidArgument("sector symmetrization needs dimension >= 2")
    a1, a2 = p.a[0], p.a[1]
    gamma = p.gamma * a1 * a2 / (4 * (a1 * a1 + a2 * a2))
    side = 2 * math.hypot(float(a1), float(a2))
    return ThicknessParams(gamma, (side, side) + p.a[2:], p.provenance + ("sector",))


def symmetrize_halfspace(S: RegionSet, p: ThicknessParams) -> tuple[RegionSet, ThicknessParams]:
    if S.dimension != p.dimension:
        raise InvalidArgument("set and parameter dimensions differ")
    return symmetrize(S, HyperplaneSpec.coordinate(0)), halfspace_params(p)


def symmetrize_orthant(S: RegionSet, p: ThicknessParams) -> tuple[RegionSet, ThicknessParams]:
    if S.dimension != p.dimension:
        raise InvalidArgument("set and parameter dimensions differ")
    return abs_pullback(S), orthant_params(p)


def symmetrize_sector(
    S: RegionSet, p: ThicknessParams, theta: float
) -> tuple[RegionSet, ThicknessParams]:
    if S.dimension != p.dimension:
        raise InvalidArgument("set and parameter dimensions differ")
    h = HyperplaneSpec.sector(theta, dim=S.dimension)
    return symmetrize(S, h), sector_params(p)


def iterate_sector_symmetrization(p: ThicknessParams, n: int) -> ThicknessParams:
    """Apply ``(gamma, a) -> (gamma/8, 2 sqrt(2) a)`` exactly ``n - 2`` times.

    This is what repeated halving of a sector of angle pi/4 does to
    parameters whose ``a`` is a multiple of ``(1, 1)``; the result feeds the
    sector cost bound for angle ``pi / 2^n``.
    """
    if p.dimension != 2:
        raise InvalidArgument("sector iteration is defined in dimension 2")
    if n < 2:
        raise InvalidArgument(f"n must be >= 2, got {n}")
    k = n - 2
    if k == 0:
        return p
    # (2 sqrt 2)^k, exact when k is even
    factor = 8 ** (k // 2) * (2 * math.sqrt(2) if k % 2 else 1)
    return ThicknessParams(
        p.gamma / 8**k,
        tuple(aj * factor for aj in p.a),
        p.provenance + ("sector-step",) * k,
    )


# ---------------------------------------------------------------------------
# sampled thickness


@dataclass(frozen=True)
class ThicknessReport:
    gamma_estimate: float
    a: tuple
    window: tuple
    resolution: int
    n_offsets: int
    min_position: tuple
    note: str

    def to_dict(self) -> dict:
        return {
            "gamma_estimate": self.gamma_estimate,
            "a": list(self.a),
            "window": [list(self.window[0]), list(self.window[1])],
            "resolution": self.resolution,
            "n_offsets": self.n_offsets,
            "min_position": list(self.min_position),
            "note": self.note,
        }


def certify_thickness(
    S: RegionSet,
    a,
    window=None,
    resolution: int = 64,
    n_offsets: int = 16,
    chunk: int = 2_000_000,
) -> ThicknessReport:
    """Sampled lower-envelope estimate of the thickness fraction of ``S``.

    For each box position ``x`` on a uniform grid of ``n_offsets`` points
    per axis, the fraction ``|S ∩ (x + [0,a])| / |[0,a]|`` is estimated by
    the midpoint rule on a ``resolution``-per-axis sub-grid.  The minimum
    over positions is returned.  ``window=(lo, hi)`` bounds the positions;
    periodic box sets default to one period.
    """
    a = np.asarray(a, dtype=float)
    d = S.dimension
    if a.shape != (d,):
        raise InvalidArgument(f"a must have {d} components")
    if np.any(a <= 0):
        raise InvalidArgument("box lengths must be positive")
    if resolution < 2 or n_offsets < 1:
        raise InvalidArgument("resolution must be >= 2 and n_offsets >= 1")

    if window is None:
        if not S.is_periodic:
            raise InvalidArgument("a window of box positions is required for non-periodic sets")
        period = S.period
        lo, hi = np.zeros(d), period
        axes = [np.arange(n_offsets) * (p / n_offsets) for p in period]
        note = "positions cover one period; exact universal quantification is not attempted"
    else:
        lo, hi = (np.asarray(w, dtype=float) for w in window)
        if lo.shape != (d,) or hi.shape != (d,) or np.any(hi < lo):
            raise InvalidArgument("window must be (lo, hi) with lo <= hi componentwise")
        axes = [np.linspace(lo[k], hi[k], n_offsets) for k in range(d)]
        note = "positions restricted to the given window; outside it nothing is certified"

    offsets = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    ticks = [(np.arange(resolution) + 0.5) * (a[k] / resolution) for k in range(d)]
    sub = np.stack(np.meshgrid(*ticks, indexing="ij"), axis=-1).reshape(-1, d)

    per_chunk = max(1, chunk // len(sub))
    fractions = np.empty(len(offsets))
    for start in range(0, len(offsets), per_chunk):
        block = offsets[start:start + per_chunk]
        pts = (block[:, None, :] + sub[None, :, :]).reshape(-1, d)
        inside = S.contains(pts).reshape(len(block), len(sub))
        fractions[start:start + per_chunk] = np.count_nonzero(inside, axis=1) / len(sub)

    i = int(np.argmin(fractions))
    return ThicknessReport(
        gamma_estimate=float(fractions[i]),
        a=tuple(float(v) for v in a),
        window=(tuple(float(v) for v in lo), tuple(float(v) for v in hi)),
        resolution=resolution,
        n_offsets=n_offsets,
        min_position=tuple(float(v) for v in offsets[i]),
        note=note,
    )


def estimate_thickness(S: RegionSet, a, window=None, resolution: int = 64, n_offsets: int = 16) -> float:
    """Minimum sampled measure fraction; see :func:`certify_thickness`."""
    return certify_thickness(S, a, window, resolution, n_offsets).gamma_estimate


# ---------------------------------------------------------------------------
# equidistributed sets


def _center_arrays(centers):
    if isinstance(centers, Mapping):
        keys = list(centers)
        idx = np.array(keys, dtype=float).reshape(len(keys), -1)
        pts = np.array([centers[k] for k in keys], dtype=float).reshape(len(keys), -1)
    else:
        idx, pts = centers
        idx = np.asarray(idx, dtype=float)
        pts = np.asarray(pts, dtype=float)
    if idx.shape != pts.shape:
        raise InvalidArgument("cell indices and centers must have matching shapes")
    return idx, pts


def verify_equidistributed(centers, G: float, delta: float) -> bool:
    """Check ``B(z_j, delta) ⊂ G j + (0, G)^d`` for every supplied ``j``.

    ``centers`` is a mapping from integer index tuples to points, or a pair
    ``(indices, points)`` of ``(N, d)`` arrays.
    """
    if not (G > 0 and 0 < delta < G / 2):
        raise InvalidArgument(f"need 0 < delta < G/2, got G={G}, delta={delta}")
    idx, pts = _center_arrays(centers)
    if len(idx) == 0:
        return True
    low = pts - G * idx
    high = G * (idx + 1) - pts
    return bool(np.all(low >= delta) and np.all(high >= delta))


def symmetrize_equidistributed(params: EquidistParams, theta: float) -> EquidistParams:
    """``(G, delta) -> (4G, delta)``, or ``(2G, delta)`` when ``theta == pi/4``.

    At pi/4 the reflection permutes lattice cells, which is why the cell size
    only doubles there.
    """
    if not (0.0 <= theta < math.pi / 2):
        raise InvalidArgument(f"sector angle must lie in [0, pi/2), got {theta!r}")
    if theta == _QUARTER_PI:
        return EquidistParams(2 * params.G, params.delta, params.provenance + ("sector-pi/4",))
    return EquidistParams(4 * params.G, params.delta, params.provenance + ("sector",))
