"""Cell-centered finite differences for ``-div(A grad) + V`` on mirror-symmetric grids.

Grids are uniform with square cells of width ``h``; cell centers sit at
half-integer offsets so no center lies on a reflection plane.  The operator
is assembled from a discrete energy

    E(u) = sum_faces  w_f a_kk,f (δ_k u)^2
         + sum_corners w_c 2 a_kl,c (D_k u)(D_l u)

with arithmetic face/corner averages of the cell coefficients.  Outside the
grid, values come from ghost cells mirrored across the boundary face
(``u_ghost = -u`` for Dirichlet, ``+u`` for Neumann, coefficient reflected
as ``U A U``).  Elements lying on the boundary carry weight 1/2 (1/4 at
corners), so the energy of a half grid is exactly half the energy of its
mirror extension.  That is what makes ``X* H_full = H_half X*`` hold.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument, UnsupportedConfiguration
from .geometry import HyperplaneSpec, RegionSet

__all__ = [
    "GridDomain",
    "CoefficientField",
    "DiscreteSystem",
    "ReflectionOperators",
    "build_grid",
    "half_domain",
    "reflect_coefficients",
    "assemble_operator",
    "build_reflection_operators",
    "check_discrete_intertwining",
    "check_control_commutation",
    "discrete_gradient_relation",
    "control_cells",
    "mirror_cells",
    "symmetric_pair",
]

BCS = ("dirichlet", "neumann")


def _bc(bc: str) -> str:
    bc = bc.lower()
    if bc in ("d", "dirichlet"):
        return "dirichlet"
    if bc in ("n", "neumann"):
        return "neumann"
    raise InvalidArgument(f"unknown boundary condition {bc!r}")


def _sign(bc: str) -> float:
    return -1.0 if _bc(bc) == "dirichlet" else 1.0


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Active cells of a uniform box grid.

    ``cells`` holds the box multi-indices of the active cells in the order
    used for vectors and matrices; ``counts`` is the box size.  Symmetric
    grids carry the ``reflection`` plane (always a coordinate plane through
    the origin); half grids point to their symmetric ``parent``.
    """

    shape: str
    lower: tuple
    h: float
    counts: tuple
    cells: np.ndarray
    reflection: HyperplaneSpec | None = None
    parent: "GridDomain | None" = None
    L: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def is_box(self) -> bool:
        return self.n_cells == int(np.prod(self.counts))

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.counts, dtype=bool)
        m[tuple(self.cells.T)] = True
        return m

    @property
    def index_map(self) -> np.ndarray:
        """Box-shaped array holding each active cell's vector index, -1 elsewhere."""
        m = np.full(self.counts, -1, dtype=np.int64)
        m[tuple(self.cells.T)] = np.arange(self.n_cells)
        return m

    @property
    def centers(self) -> np.ndarray:
        return np.asarray(self.lower) + (self.cells + 0.5) * self.h

    def involution(self) -> np.ndarray:
        """Index permutation realizing the grid's reflection."""
        if self.reflection is None:
            raise InvalidArgument("grid has no declared reflection")
        k = self.reflection.axis
        mirrored = self.cells.copy()
        mirrored[:, k] = self.counts[k] - 1 - mirrored[:, k]
        perm = self.index_map[tuple(mirrored.T)]
        if np.any(perm < 0):
            raise InvalidArgument("grid is not symmetric under its reflection")
        return perm

    def permuted(self, perm) -> "GridDomain":
        """Same grid with cells reordered: new cell ``i`` is old cell ``perm[i]``."""
        perm = np.asarray(perm)
        return GridDomain(self.shape, self.lower, self.h, self.counts, self.cells[perm],
                          self.reflection, self.parent, self.L)

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "L": self.L,
            "h": self.h,
            "lower": list(self.lower),
            "counts": list(self.counts),
            "n_cells": self.n_cells,
            "reflection": None if self.reflection is None else self.reflection.to_dict(),
        }


def _box_cells(counts) -> np.ndarray:
    return np.stack(np.meshgrid(*[np.arange(n) for n in counts], indexing="ij"), -1).reshape(-1, len(counts))


def build_grid(shape: str, L=1.0, cells: int | None = None, h: float | None = None, dim: int = 2) -> GridDomain:
    """Build a cell-centered grid.

    Shapes: ``interval`` (0, L); ``sym_interval`` (-L, L); ``square``
    (0, L)^dim; ``sym_box`` (-L, L) x (0, L)^(dim-1); ``rectangle`` with
    ``L = (L_1, ..., L_d)``; ``right_triangle`` {(x, y) in (0, L)^2 : y < x};
    ``prism`` triangle x (0, L).  Give either ``h`` or ``cells``, the number
    of cells per length ``L`` (so ``h = L / cells``).
    """
    lengths = np.atleast_1d(np.asarray(L, dtype=float))
    if np.any(lengths <= 0):
        raise InvalidArgument("domain lengths must be positive")
    Lref = float(lengths[0])
    if h is None:
        if cells is None:
            raise InvalidArgument("give h or cells")
        if cells < 1:
            raise InvalidArgument("cells must be positive")
        h = Lref / cells
    h = float(h)
    if not h > 0:
        raise InvalidArgument("h must be positive")

    def count(length):
        n = length / h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise InvalidArgument(f"length {length} is not a multiple of h={h}")
        return int(round(n))

    n = count(Lref)
    reflection = None
    if shape == "interval":
        lower, counts = (0.0,), (n,)
    elif shape == "sym_interval":
        lower, counts = (-Lref,), (2 * n,)
        reflection = HyperplaneSpec.coordinate(0, dim=1)
    elif shape == "square":
        lower, counts = (0.0,) * dim, (n,) * dim
    elif shape == "sym_box":
        lower, counts = (-Lref,) + (0.0,) * (dim - 1), (2 * n,) + (n,) * (dim - 1)
        reflection = HyperplaneSpec.coordinate(0, dim=dim)
    elif shape == "rectangle":
        lower = (0.0,) * len(lengths)
        counts = tuple(count(x) for x in lengths)
    elif shape in ("right_triangle", "prism"):
        dim = 2 if shape == "right_triangle" else 3
        lower, counts = (0.0,) * dim, (n,) * dim
    else:
        raise InvalidArgument(f"unknown grid shape {shape!r}")
    if any(c < 2 for c in counts) and shape not in ("right_triangle", "prism"):
        raise InvalidArgument("need at least 2 cells per axis")

    box = _box_cells(counts)
    if shape in ("right_triangle", "prism"):
        # strict center test y < x; diagonal cells are excluded
        box = box[box[:, 1] < box[:, 0]]
        if len(box) == 0:
            raise InvalidArgument("triangle grid has no cells; refine h")
    return GridDomain(shape, tuple(lower), h, tuple(counts), box, reflection, None, Lref)


def half_domain(parent: GridDomain) -> GridDomain:
    """The part of a symmetric grid on the positive side of its reflection plane."""
    if parent.reflection is None:
        raise InvalidArgument("parent grid declares no reflection")
    k = parent.reflection.axis
    nk = parent.counts[k]
    if nk % 2:
        raise InvalidArgument("symmetric grid must have an even cell count across the plane")
    keep = parent.cells[parent.cells[:, k] >= nk // 2].copy()
    keep[:, k] -= nk // 2
    lower = list(parent.lower)
    lower[k] = 0.0
    counts = list(parent.counts)
    counts[k] = nk // 2
    return GridDomain("half_domain", tuple(lower), parent.h, tuple(counts), keep, None, parent, parent.L)


def symmetric_pair(shape: str, L=1.0, cells: int | None = None, h: float | None = None, dim: int = 2):
    """``(half, full)`` grids; ``shape`` is ``sym_interval`` or ``sym_box``."""
    full = build_grid(shape, L, cells, h, dim)
    return half_domain(full), full


def _full_positions(half: GridDomain, full: GridDomain):
    """Full-grid indices of the half cells and of their mirror images."""
    if half.parent is not full:
        raise InvalidArgument("half grid is not derived from this full grid")
    k = full.reflection.axis
    pos = half.cells.copy()
    pos[:, k] += full.counts[k] // 2
    mir = pos.copy()
    mir[:, k] = full.counts[k] - 1 - pos[:, k]
    fmap = full.index_map
    return fmap[tuple(pos.T)], fmap[tuple(mir.T)]


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Per-cell diffusion matrices ``A`` (shape ``(n, d, d)``) and potential ``V``."""

    A: np.ndarray
    V: np.ndarray
    theta_bounds: tuple

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or V.shape != (A.shape[0],):
            raise InvalidArgument("A must have shape (n, d, d) and V shape (n,)")
        if not np.array_equal(A, np.swapaxes(A, 1, 2)):
            raise InvalidArgument("A must be symmetric in every cell")
        eig = np.linalg.eigvalsh(A)
        t1, t2 = self.theta_bounds
        if not (0 < t1 <= t2):
            raise InvalidArgument("need 0 < theta_1 <= theta_2")
        tol = 1e-12 * max(1.0, t2)
        if eig.min() < t1 - tol or eig.max() > t2 + tol:
            raise InvalidArgument(
                f"ellipticity bracket [{t1}, {t2}] violated: eigenvalues in [{eig.min()}, {eig.max()}]"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "V", V)

    @property
    def n_cells(self) -> int:
        return len(self.V)

    @property
    def has_cross_terms(self) -> bool:
        d = self.A.shape[1]
        off = self.A[:, ~np.eye(d, dtype=bool)]
        return bool(np.any(off != 0))

    @classmethod
    def build(cls, grid: GridDomain, A=1.0, V=0.0, theta_bounds=None) -> "CoefficientField":
        """Coefficients from constants or callables of the cell centers.

        ``A`` may be a scalar, a ``(d, d)`` matrix, or a function returning
        ``(n, d, d)`` (or ``(n,)`` scalar diffusivities) for an ``(n, d)``
        array of centers.  ``theta_bounds`` defaults to the extreme cell
        eigenvalues.
        """
        x = grid.centers
        n, d = x.shape
        Av = A(x) if callable(A) else A
        Av = np.asarray(Av, dtype=float)
        if Av.ndim == 0:
            Av = np.broadcast_to(Av * np.eye(d), (n, d, d))
        elif Av.shape == (d, d):
            Av = np.broadcast_to(Av, (n, d, d))
        elif Av.shape == (n,):
            Av = Av[:, None, None] * np.eye(d)
        Vv = np.asarray(V(x) if callable(V) else V, dtype=float)
        Vv = np.broadcast_to(Vv, (n,)).copy()
        Av = np.array(Av)
        if theta_bounds is None:
            eig = np.linalg.eigvalsh(Av)
            theta_bounds = (float(eig.min()), float(eig.max()))
        return cls(Av, Vv, tuple(theta_bounds))


def reflect_coefficients(field: CoefficientField, half: GridDomain) -> CoefficientField:
    """Extend half-grid coefficients to the parent grid.

    Mirrored cells get ``U A U`` (``U = diag`` with -1 on the reflection
    axis) and the same potential; the ellipticity bracket is unchanged.
    """
    full = half.parent
    if full is None:
        raise InvalidArgument("half grid has no symmetric parent")
    if field.n_cells != half.n_cells:
        raise InvalidArgument("field does not live on the half grid")
    pos, mir = _full_positions(half, full)
    d = full.dim
    u = np.ones(d)
    u[full.reflection.axis] = -1.0
    A = np.empty((full.n_cells, d, d))
    V = np.empty(full.n_cells)
    A[pos] = field.A
    A[mir] = field.A * u[None, :, None] * u[None, None, :]
    V[pos] = field.V
    V[mir] = field.V
    return CoefficientField(A, V, field.theta_bounds)


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Symmetric operator ``H`` with 0/1 control injection ``B = diag(chi)``."""

    H: sp.csr_matrix
    chi: np.ndarray
    bc: str
    grid: GridDomain
    field: CoefficientField | None = None

    @property
    def B(self) -> sp.csr_matrix:
        return sp.diags(self.chi.astype(float), format="csr")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def with_control(self, chi) -> "DiscreteSystem":
        chi = np.asarray(chi, dtype=bool)
        if chi.shape != (self.n,):
            raise InvalidArgument("control mask has the wrong length")
        return DiscreteSystem(self.H, chi, self.bc, self.grid, self.field)

    def header(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "bc": self.bc,
            "control_cells": [int(i) for i in np.flatnonzero(self.chi)],
            "n": self.n,
            "nnz": int(self.H.nnz),
        }

    def triplets_csv(self) -> str:
        """``row,col,value`` lines of ``H`` sorted by row then column."""
        coo = self.H.tocoo()
        order = np.lexsort((coo.col, coo.row))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for i in order:
            w.writerow([int(coo.row[i]), int(coo.col[i]), repr(float(coo.data[i]))])
        return buf.getvalue()

    def dump(self, directory, stem: str = "system") -> list:
        """Write ``<stem>.json`` (header) and ``<stem>_H.csv`` (triplets)."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        hp = directory / f"{stem}.json"
        mp = directory / f"{stem}_H.csv"
        hp.write_text(json.dumps(self.header(), indent=2, sort_keys=True))
        mp.write_text(self.triplets_csv())
        return [hp, mp]


def _padded_index(grid: GridDomain) -> np.ndarray:
    return np.pad(grid.index_map, 1, constant_values=-1)


def _axis_slices(d, k, lo, hi, others=(1, -1)):
    return tuple(slice(lo, hi) if m == k else slice(*others) for m in range(d))


def _face_terms(grid, A, sigma):
    """COO triplets of the face (diagonal-coefficient) part of the energy."""
    d = grid.dim
    P = _padded_index(grid)
    rows, cols, vals = [], [], []
    for k in range(d):
        akk = A[:, k, k]
        left = P[_axis_slices(d, k, 0, -1)].ravel()
        right = P[_axis_slices(d, k, 1, None)].ravel()
        both = (left >= 0) & (right >= 0)
        li, ri = left[both], right[both]
        w = 0.5 * (akk[li] + akk[ri])
        rows += [li, ri, li, ri]
        cols += [li, ri, ri, li]
        vals += [w, w, -w, -w]
        one = (left >= 0) ^ (right >= 0)
        c = np.where(left[one] >= 0, left[one], right[one])
        # half-weight boundary face: 1/2 a (u - sigma u)^2
        wb = 0.5 * akk[c] * (1.0 - sigma) ** 2
        rows.append(c)
        cols.append(c)
        vals.append(wb)
    return rows, cols, vals


def _ghost_tables(grid: GridDomain, sigma: float):
    """For the padded box: mirrored cell index, value sign, and reflected-axis flags."""
    d = grid.dim
    counts = np.array(grid.counts)
    grids = np.meshgrid(*[np.arange(-1, n + 1) for n in counts], indexing="ij")
    pos = np.stack(grids, -1)
    low = pos < 0
    high = pos >= counts
    mirrored = np.where(low, 0, np.where(high, counts - 1, pos))
    flipped = low | high
    idx = grid.index_map[tuple(np.moveaxis(mirrored, -1, 0))]
    sign = np.where(flipped.sum(-1) % 2 == 1, sigma, 1.0) if sigma < 0 else np.ones(idx.shape)
    return idx, sign, flipped


def _corner_terms(grid, A, sigma):
    """COO triplets of the cross-derivative part (box grids only)."""
    d = grid.dim
    counts = np.array(grid.counts)
    idx, sign, flipped = _ghost_tables(grid, sigma)
    rows, cols, vals = [], [], []
    h_inv = 0.5  # 1/(2h), with the global 1/h^2 applied later
    for k in range(d):
        for l in range(k + 1, d):
            # block base b ranges over padded positions 0..n along k and l
            akl = A[:, k, l]
            sl = []
            for m in range(d):
                sl.append(slice(0, counts[m] + 1) if m in (k, l) else slice(1, counts[m] + 1))

            def shifted(arr, dk, dl):
                s = list(sl)
                s[k] = slice(s[k].start + dk, s[k].stop + dk)
                s[l] = slice(s[l].start + dl, s[l].stop + dl)
                return arr[tuple(s)]

            corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
            ci = [shifted(idx, *o).ravel() for o in corners]
            cs = [shifted(sign, *o).ravel() for o in corners]
            cf = []
            for o in corners:
                f = shifted(flipped, *o)
                # U_m A U_m flips a_kl when exactly one of k, l was mirrored
                cf.append(np.where(f[..., k] ^ f[..., l], -1.0, 1.0).ravel())
            a = [akl[ci[j]] * cf[j] for j in range(4)]
            # pair across axis k first so mirrored pairs cancel exactly
            a_corner = ((a[0] + a[1]) + (a[2] + a[3])) * 0.25

            base = np.stack(np.meshgrid(*[
                np.arange(-1, counts[m]) if m in (k, l) else np.arange(counts[m]) for m in range(d)
            ], indexing="ij"), -1).reshape(-1, d)
            on_bdry = ((base[:, k] == -1) | (base[:, k] == counts[k] - 1)).astype(int) + \
                      ((base[:, l] == -1) | (base[:, l] == counts[l] - 1)).astype(int)
            weight = 0.5 ** on_bdry * a_corner

            gk = [-h_inv, h_inv, -h_inv, h_inv]
            gl = [-h_inv, -h_inv, h_inv, h_inv]
            for i in range(4):
                for j in range(4):
                    coef = (gk[i] * gl[j] + gl[i] * gk[j]) * cs[i] * cs[j] * weight
                    rows.append(ci[i])
                    cols.append(ci[j])
                    vals.append(coef)
    return rows, cols, vals


def assemble_operator(
    grid: GridDomain, field: CoefficientField, bc: str, chi=None
) -> DiscreteSystem:
    """Assemble ``H = -div(A grad) + V`` with Dirichlet or Neumann ghosts.

    ``chi`` is the boolean control mask over cells (default: empty).
    Off-diagonal diffusion is only supported on full box grids; on the
    staircase boundary of a triangle or prism it raises
    :class:`UnsupportedConfiguration`.
    """
    bc = _bc(bc)
    if field.n_cells != grid.n_cells or field.A.shape[1] != grid.dim:
        raise InvalidArgument("coefficient field does not match the grid")
    sigma = _sign(bc)
    rows, cols, vals = _face_terms(grid, field.A, sigma)
    if field.has_cross_terms:
        if not grid.is_box:
            raise UnsupportedConfiguration(
                "full-tensor diffusion needs a box grid; staircase boundaries break the cross stencil"
            )
        r2, c2, v2 = _corner_terms(grid, field.A, sigma)
        rows += r2
        cols += c2
        vals += v2
    n = grid.n_cells
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals) / grid.h**2
    H = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    H = H + sp.diags(field.V, format="csr")
    H = ((H + H.T) * 0.5).tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    H.sort_indices()
    if chi is None:
        chi = np.zeros(n, dtype=bool)
    chi = np.asarray(chi, dtype=bool)
    if chi.shape != (n,):
        raise InvalidArgument("control mask has the wrong length")
    return DiscreteSystem(H, chi, bc, grid, field)


# ---------------------------------------------------------------------------
# reflection operators


@dataclass(frozen=True, eq=False)
class ReflectionOperators:
    """Extension ``X`` (half -> full, ``f ⊕ λ Jf``) and its adjoint ``Xstar``."""

    X: sp.csr_matrix
    Xstar: sp.csr_matrix
    lam: float
    positions: np.ndarray
    mirrors: np.ndarray
    half: GridDomain
    full: GridDomain


def build_reflection_operators(half: GridDomain, full: GridDomain, bc: str) -> ReflectionOperators:
    """``X f = f ⊕ λ (f∘M)`` with ``λ = +1`` (Neumann) or ``-1`` (Dirichlet)."""
    lam = _sign(bc)
    pos, mir = _full_positions(half, full)
    n = half.n_cells
    cols = np.concatenate([np.arange(n), np.arange(n)])
    rows = np.concatenate([pos, mir])
    vals = np.concatenate([np.ones(n), np.full(n, lam)])
    X = sp.csr_matrix((vals, (rows, cols)), shape=(full.n_cells, n))
    X.sort_indices()
    Xstar = X.T.tocsr()
    Xstar.sort_indices()
    return ReflectionOperators(X, Xstar, lam, pos, mir, half, full)


def _max_abs(M) -> float:
    M = sp.csr_matrix(M)
    return float(abs(M).max()) if M.nnz else 0.0


def check_discrete_intertwining(ops: ReflectionOperators, H_half, H_full) -> float:
    """``max |Xstar H_full - H_half Xstar|`` over all entries."""
    D = ops.Xstar @ sp.csr_matrix(H_full) - sp.csr_matrix(H_half) @ ops.Xstar
    return _max_abs(D)


def check_control_commutation(ops: ReflectionOperators, chi_half, chi_full) -> bool:
    """Exact test of ``Xstar diag(chi_full) == diag(chi_half) Xstar``."""
    left = ops.Xstar @ sp.diags(np.asarray(chi_full, dtype=float))
    right = sp.diags(np.asarray(chi_half, dtype=float)) @ ops.Xstar
    return _max_abs(left - right) == 0.0


def control_cells(grid: GridDomain, S: RegionSet) -> np.ndarray:
    """Cells whose centers lie in ``S`` (the discrete ``Ω ∩ S``)."""
    return np.asarray(S.contains(grid.centers), dtype=bool)


def mirror_cells(ops: ReflectionOperators, chi_half) -> np.ndarray:
    """Full-grid mask of ``ω ∪ M(ω)``."""
    chi_half = np.asarray(chi_half, dtype=bool)
    out = np.zeros(ops.full.n_cells, dtype=bool)
    out[ops.positions[chi_half]] = True
    out[ops.mirrors[chi_half]] = True
    return out


def discrete_gradient_relation(ops: ReflectionOperators, f) -> float:
    """Max defect of ``grad(X f) = λ U (grad f)∘M`` on faces inside the mirror half.

    Gradients are forward differences between neighboring cells; faces on
    the reflection plane are excluded.  Box grids only.
    """
    half, full = ops.half, ops.full
    if not (half.is_box and full.is_box):
        raise UnsupportedConfiguration("gradient relation is implemented for box grids")
    f = np.asarray(f, dtype=float)
    k = full.reflection.axis
    g = np.zeros(full.counts)
    g[tuple(full.cells.T)] = ops.X @ f
    fb = np.zeros(half.counts)
    fb[tuple(half.cells.T)] = f
    nk = half.counts[k]
    mirror_part = g[_axis_slices(full.dim, k, 0, nk, (None, None))]
    defect = 0.0
    for m in range(full.dim):
        grad_x = np.diff(mirror_part, axis=m) / full.h
        grad_f = np.flip(np.diff(fb, axis=m) / half.h, axis=k)
        u = -1.0 if m == k else 1.0
        if grad_x.size:
            defect = max(defect, float(np.max(np.abs(grad_x - ops.lam * u * grad_f))))
    return defect
