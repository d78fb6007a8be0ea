"""
Structured grids on an interval or an axis-aligned rectangle.

Nodes are stored in ``ij`` order, so a 2D field has shape ``(nx, ny)`` with
the first index running along x. Every domain here has an analytic
distance-to-boundary field, which makes ``dist`` exact rather than the
output of an eikonal solve.

Two quadrature levels are used throughout the package:

* nodal (trapezoidal) weights, for norms of nodal fields;
* cells, for loads and singular weights. A cell is the box spanned by
  ``2**dim`` neighbouring nodes; values at its center are the mean of the
  corner values, and the distance weight ``d(x)**mu`` is integrated exactly
  over the cell so that it is never evaluated on the boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
import numpy as np

from .errors import ConfigurationError, NonIntegrableExponentError

__all__ = [
    "Mesh",
    "ScalarField",
    "build_mesh",
    "refine",
    "gradient",
    "norm_sup_grad",
    "norm_Lr",
    "integrate_singular",
    "write_fields_csv",
    "read_fields_csv",
]


@dataclass(frozen=True)
class Mesh:
    """Uniform tensor grid with boundary flags and distance field.

    Attributes:
        dim: 1 or 2.
        extents: ``((a, b),)`` or ``((ax, bx), (ay, by))``.
        n: node count per axis, each at least 3.
    """

    dim: int
    extents: tuple[tuple[float, float], ...]
    n: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def cells_shape(self) -> tuple[int, ...]:
        return tuple(k - 1 for k in self.n)

    @cached_property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (k - 1) for (a, b), k in zip(self.extents, self.n))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, k) for (a, b), k in zip(self.extents, self.n))

    @cached_property
    def grids(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.coords, indexing="ij"))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        mask.setflags(write=False)
        return mask

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @cached_property
    def dist(self) -> np.ndarray:
        axis_d = []
        for (a, b), x in zip(self.extents, self.grids):
            axis_d.append(np.minimum(x - a, b - x))
        d = np.minimum.reduce(axis_d) if self.dim > 1 else axis_d[0].copy()
        d[self.boundary_mask] = 0.0
        d.setflags(write=False)
        return d

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def nodal_volume(self) -> float:
        """Dual-cell volume of an interior node."""
        return self.cell_volume

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))

    @property
    def diameter(self) -> float:
        return float(np.hypot.reduce([b - a for a, b in self.extents]))

    @property
    def inradius(self) -> float:
        return min(b - a for a, b in self.extents) / 2.0

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Tensor trapezoidal weights; they sum to the domain measure."""
        w1 = []
        for hk, k in zip(self.h, self.n):
            w = np.full(k, hk)
            w[0] = w[-1] = hk / 2.0
            w1.append(w)
        w = w1[0] if self.dim == 1 else np.multiply.outer(w1[0], w1[1])
        w.setflags(write=False)
        return w

    @cached_property
    def cell_dist(self) -> np.ndarray:
        """Distance to the boundary at cell centers (always > 0)."""
        axis_d = []
        for (a, b), x in zip(self.extents, self.coords):
            xc = 0.5 * (x[:-1] + x[1:])
            axis_d.append(np.minimum(xc - a, b - xc))
        if self.dim == 1:
            d = axis_d[0]
        else:
            d = np.minimum.outer(axis_d[0], axis_d[1])
        d.setflags(write=False)
        return d

    def cell_average(self, values: np.ndarray) -> np.ndarray:
        """Multilinear interpolation of nodal values to cell centers."""
        v = np.asarray(values, dtype=float)
        if self.dim == 1:
            return 0.5 * (v[:-1] + v[1:])
        return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])

    def cell_gradient(self, values: np.ndarray) -> np.ndarray:
        """Gradient at cell centers, shape ``cells_shape + (dim,)``."""
        v = np.asarray(values, dtype=float)
        if self.dim == 1:
            return (np.diff(v) / self.h[0])[..., None]
        hx, hy = self.h
        gx = 0.5 * ((v[1:, :-1] - v[:-1, :-1]) + (v[1:, 1:] - v[:-1, 1:])) / hx
        gy = 0.5 * ((v[:-1, 1:] - v[:-1, :-1]) + (v[1:, 1:] - v[1:, :-1])) / hy
        return np.stack([gx, gy], axis=-1)

    def corner_gradients(self, values: np.ndarray) -> np.ndarray:
        """Per-cell gradients of the energy discretization.

        In 1D this is the single difference quotient of each cell. In 2D each
        cell carries four gradients, one per corner, built from the two cell
        edges meeting there (the union of both diagonal triangulations).
        Shape is ``(ncorner,) + cells_shape + (dim,)``.
        """
        v = np.asarray(values, dtype=float)
        if self.dim == 1:
            return (np.diff(v) / self.h[0])[None, :, None]
        hx, hy = self.h
        sx = (v[1:, :-1] - v[:-1, :-1]) / hx
        nx = (v[1:, 1:] - v[:-1, 1:]) / hx
        wy = (v[:-1, 1:] - v[:-1, :-1]) / hy
        ey = (v[1:, 1:] - v[1:, :-1]) / hy
        return np.stack(
            [np.stack(g, axis=-1) for g in ((sx, wy), (sx, ey), (nx, wy), (nx, ey))]
        )

    def dist_moment(self, mu: float) -> np.ndarray:
        """Exact cell integrals of ``d(x)**mu``; requires ``mu > -1``."""
        if mu <= -1.0:
            raise NonIntegrableExponentError(f"d^mu is not integrable for mu={mu} <= -1")
        pieces = [_axis_pieces(x, a, b) for (a, b), x in zip(self.extents, self.coords)]
        if self.dim == 1:
            t0, t1 = pieces[0]
            out = ((t1 ** (mu + 1) - t0 ** (mu + 1)) / (mu + 1)).sum(axis=1)
            return out
        (tx0, tx1), (ty0, ty1) = pieces
        out = np.zeros(self.cells_shape)
        for a in range(2):
            for b in range(2):
                X0, Y0 = np.meshgrid(tx0[:, a], ty0[:, b], indexing="ij")
                X1, Y1 = np.meshgrid(tx1[:, a], ty1[:, b], indexing="ij")
                out += (
                    _min_power_primitive(X1, Y1, mu)
                    - _min_power_primitive(X0, Y1, mu)
                    - _min_power_primitive(X1, Y0, mu)
                    + _min_power_primitive(X0, Y0, mu)
                )
        return out

    def to_points(self) -> np.ndarray:
        return np.stack([g.ravel() for g in self.grids], axis=1)


def _axis_pieces(x: np.ndarray, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Split each cell of one axis into pieces on which the axis distance is affine.

    Returns arrays ``(t0, t1)`` of shape ``(ncell, 2)`` with ``t0 <= t1``, the
    distance range covered by each piece. A cell without a kink gets an
    empty second piece.
    """
    m = 0.5 * (a + b)
    lo, hi = x[:-1], x[1:]
    t0 = np.zeros((lo.size, 2))
    t1 = np.zeros((lo.size, 2))
    left = hi <= m
    right = lo >= m
    split = ~(left | right)
    t0[left, 0], t1[left, 0] = lo[left] - a, hi[left] - a
    t0[right, 0], t1[right, 0] = b - hi[right], b - lo[right]
    t0[split, 0], t1[split, 0] = lo[split] - a, m - a
    t0[split, 1], t1[split, 1] = b - hi[split], b - m
    return np.maximum(t0, 0.0), np.maximum(t1, 0.0)


def _min_power_primitive(X: np.ndarray, Y: np.ndarray, mu: float) -> np.ndarray:
    """``int_0^X int_0^Y min(s, t)**mu dt ds`` for ``X, Y >= 0``."""
    lo = np.minimum(X, Y)
    hi = np.maximum(X, Y)
    a1, a2 = mu + 1.0, mu + 2.0
    return lo**a2 / (a1 * a2) + hi * lo**a1 / a1 - lo**a2 / a2


def build_mesh(dim: int, extents, n) -> Mesh:
    """Create a :class:`Mesh`.

    ``extents`` is ``(a, b)`` or a sequence of such pairs; ``n`` is an int
    (same count on every axis) or one count per axis.
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    ext = np.asarray(extents, dtype=float)
    if ext.shape == (2,):
        ext = np.tile(ext, (dim, 1))
    if ext.shape != (dim, 2):
        raise ConfigurationError(f"extents must give {dim} intervals, got {extents!r}")
    if np.any(ext[:, 1] <= ext[:, 0]) or not np.all(np.isfinite(ext)):
        raise ConfigurationError(f"degenerate extents {extents!r}")
    counts = (int(n),) * dim if np.isscalar(n) else tuple(int(k) for k in n)
    if len(counts) != dim:
        raise ConfigurationError(f"need {dim} node counts, got {n!r}")
    if min(counts) < 3:
        raise ConfigurationError(f"every axis needs at least 3 nodes, got {counts}")
    return Mesh(dim, tuple((float(a), float(b)) for a, b in ext), counts)


def refine(mesh: Mesh, factor: int = 2) -> Mesh:
    """Same domain with spacing divided by ``factor`` (nodes are nested)."""
    return Mesh(mesh.dim, mesh.extents, tuple(factor * (k - 1) + 1 for k in mesh.n))


class ScalarField:
    """Nodal values of a function on a :class:`Mesh` (read-only)."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh: Mesh, values):
        v = np.array(values, dtype=float)
        if v.ndim == 0:
            v = np.full(mesh.shape, float(v))
        v = v.reshape(mesh.shape)
        v.setflags(write=False)
        self.mesh = mesh
        self.values = v

    @classmethod
    def from_function(cls, mesh: Mesh, fn) -> "ScalarField":
        return cls(mesh, fn(*mesh.grids))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "ScalarField":
        return cls(mesh, np.zeros(mesh.shape))

    def dirichlet(self) -> "ScalarField":
        """Copy with boundary values set to zero."""
        v = self.values.copy()
        v[self.mesh.boundary_mask] = 0.0
        return ScalarField(self.mesh, v)

    def __add__(self, other):
        return ScalarField(self.mesh, self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.mesh, self.values - _vals(other))

    def __mul__(self, other):
        return ScalarField(self.mesh, self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def __abs__(self):
        return ScalarField(self.mesh, np.abs(self.values))

    def __repr__(self):
        return f"ScalarField(shape={self.values.shape}, max={self.values.max():.6g})"


def _vals(x):
    return x.values if isinstance(x, ScalarField) else x


def gradient(f: ScalarField) -> np.ndarray:
    """Nodal gradient, shape ``mesh.shape + (dim,)``.

    Centered differences inside, second-order one-sided differences on the
    boundary, so affine and quadratic fields are differentiated exactly.
    """
    mesh = f.mesh
    if mesh.dim == 1:
        return np.gradient(f.values, mesh.coords[0], edge_order=2)[..., None]
    return np.stack(np.gradient(f.values, *mesh.coords, edge_order=2), axis=-1)


def norm_sup_grad(f: ScalarField) -> float:
    """Maximum Euclidean length of the nodal gradient."""
    return float(np.sqrt((gradient(f) ** 2).sum(axis=-1)).max())


def norm_Lr(f: ScalarField, r: float) -> float:
    """Trapezoidal ``L^r`` norm of a nodal field."""
    if r < 1:
        raise ConfigurationError(f"L^r norm needs r >= 1, got {r}")
    w = f.mesh.node_weights
    return float((np.abs(f.values) ** r * w).sum() ** (1.0 / r))


def integrate_singular(mu: float, f: ScalarField) -> float:
    """Approximate ``int d(x)**mu f(x) dx``.

    ``f`` is sampled at cell centers and the weight ``d**mu`` is integrated
    exactly over each cell, so the quadrature never touches ``d = 0``.
    """
    if mu <= -1.0:
        raise NonIntegrableExponentError(f"d^mu is not integrable for mu={mu} <= -1")
    mesh = f.mesh
    return float((mesh.dist_moment(mu) * mesh.cell_average(f.values)).sum())


def write_fields_csv(path, mesh: Mesh, fields: dict[str, ScalarField | np.ndarray]) -> None:
    """One row per node: coordinates, dist, then one column per field."""
    names = ["x", "y"][: mesh.dim]
    cols = [g.ravel() for g in mesh.grids] + [mesh.dist.ravel()]
    for f in fields.values():
        cols.append(np.asarray(_vals(f), dtype=float).ravel())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["dist"] + list(fields))
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def read_fields_csv(path, mesh: Mesh) -> dict[str, ScalarField]:
    """Inverse of :func:`write_fields_csv` for a known mesh."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    if body.shape[0] != int(np.prod(mesh.shape)):
        raise ConfigurationError(f"{path}: {body.shape[0]} rows for a mesh of {mesh.shape}")
    skip = mesh.dim + 1
    return {name: ScalarField(mesh, body[:, k]) for k, name in enumerate(header) if k >= skip}
