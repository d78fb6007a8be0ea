"""
Dirichlet p-Laplacian solver on structured grids.

``plap_solve`` minimizes the regularized discrete energy

    J(u) = sum_cells sum_pieces w * (1/p) (|G u|^2 + eps^2)^(p/2) - b . u

over nodal fields vanishing on the boundary. ``G u`` is the per-cell
difference quotient in 1D and the four corner gradients of each cell in 2D
(weight ``w = vol/4`` each). The load vector ``b`` lumps cell-center load
values onto the cell corners, so a load only ever needs values at cell
centers where ``d > 0``.

For p = 2 the Hessian is the standard 3/5-point Laplacian, an M-matrix;
together with the convexity of the energy this gives a discrete weak
comparison principle, which the barrier and fixed-point modules rely on.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, IterationLimitError, NonIntegrableExponentError
from .mesh import Mesh, ScalarField

log = logging.getLogger(__name__)

__all__ = [
    "PlapConfig",
    "SingularLoad",
    "cell_load",
    "load_vector",
    "load_norm",
    "plap_solve",
    "plap_residual",
    "plap_energy",
]


@dataclass(frozen=True)
class PlapConfig:
    """Solver settings.

    ``eps_reg=None`` picks ``1e-6 * h_min / diameter`` for the mesh at hand.
    ``tol`` bounds the sup-norm of the energy gradient divided by the nodal
    volume, i.e. the residual in load units.
    """

    eps_reg: float | None = None
    tol: float = 1e-9
    max_iter: int = 200
    line_search_shrink: float = 0.5
    armijo: float = 1e-4

    def __post_init__(self):
        if self.eps_reg is not None and self.eps_reg <= 0:
            raise ConfigurationError("eps_reg must be positive")
        if self.tol <= 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if not 0 < self.line_search_shrink < 1:
            raise ConfigurationError("line_search_shrink must lie in (0, 1)")

    def eps_for(self, mesh: Mesh) -> float:
        if self.eps_reg is not None:
            return self.eps_reg
        return 1e-6 * min(mesh.h) / mesh.diameter


@dataclass(frozen=True)
class SingularLoad:
    """The load ``c0 + c1 * d(x)**mu``, kept symbolic until assembly."""

    c0: float
    c1: float
    mu: float

    def __post_init__(self):
        if self.mu <= -1.0:
            raise NonIntegrableExponentError(
                f"load exponent mu={self.mu} <= -1 is not admissible"
            )

    def at_cells(self, mesh: Mesh) -> np.ndarray:
        d = mesh.cell_dist
        return self.c0 + self.c1 * (d**self.mu if self.mu != 0 else np.ones_like(d))


def cell_load(mesh: Mesh, g) -> np.ndarray:
    """Cell-center values of a load.

    ``g`` may be a number, a :class:`ScalarField` (interpolated to centers), a
    :class:`SingularLoad`, or an array already shaped like ``mesh.cells_shape``.
    """
    if isinstance(g, SingularLoad):
        return g.at_cells(mesh)
    if isinstance(g, ScalarField):
        return mesh.cell_average(g.values)
    if np.isscalar(g):
        return np.full(mesh.cells_shape, float(g))
    arr = np.asarray(g, dtype=float)
    if arr.shape == mesh.cells_shape:
        return arr
    if arr.shape == mesh.shape:
        return mesh.cell_average(arr)
    raise ConfigurationError(f"cannot interpret load of shape {arr.shape} on mesh {mesh.shape}")


def load_norm(mesh: Mesh, g, r: float) -> float:
    """``L^r`` norm of a load using its cell-center values."""
    vals = cell_load(mesh, g)
    return float((np.abs(vals) ** r).sum() * mesh.cell_volume) ** (1.0 / r)


@dataclass(frozen=True)
class _Operators:
    interior: np.ndarray  # flat indices of interior nodes
    # each piece: (weight, [difference operator per gradient component])
    pieces: tuple
    lump: sp.csr_matrix  # cells -> interior load vector
    laplacian: sp.csc_matrix
    stacked: sp.csr_matrix  # all gradient components, piece by piece


@lru_cache(maxsize=16)
def _operators(mesh: Mesh) -> _Operators:
    nn = int(np.prod(mesh.shape))
    nc = int(np.prod(mesh.cells_shape))
    idx = np.arange(nn).reshape(mesh.shape)
    interior = idx[mesh.interior_mask]
    rows = np.arange(nc)

    def select(nodes):
        return sp.csr_matrix((np.ones(nc), (rows, nodes.ravel())), shape=(nc, nn))

    if mesh.dim == 1:
        (h,) = mesh.h
        D = (select(idx[1:]) - select(idx[:-1])) / h
        pieces = ((mesh.cell_volume, (D[:, interior],)),)
        corners = [idx[:-1], idx[1:]]
    else:
        hx, hy = mesh.h
        sw, se = idx[:-1, :-1], idx[1:, :-1]
        nw, ne = idx[:-1, 1:], idx[1:, 1:]
        sx = ((select(se) - select(sw)) / hx)[:, interior]
        nx = ((select(ne) - select(nw)) / hx)[:, interior]
        wy = ((select(nw) - select(sw)) / hy)[:, interior]
        ey = ((select(ne) - select(se)) / hy)[:, interior]
        w = mesh.cell_volume / 4.0
        pieces = ((w, (sx, wy)), (w, (sx, ey)), (w, (nx, wy)), (w, (nx, ey)))
        corners = [sw, se, nw, ne]
    share = mesh.cell_volume / len(corners)
    lump = sum(select(c) for c in corners).T.tocsr()[interior] * share
    lap = sum(w * (D.T @ D) for w, comps in pieces for D in comps)
    stacked = sp.vstack([D for _, comps in pieces for D in comps], format="csr")
    return _Operators(interior, pieces, lump.tocsr(), sp.csc_matrix(lap), stacked)


@lru_cache(maxsize=16)
def _laplacian_lu(mesh: Mesh):
    return spla.splu(_operators(mesh).laplacian)


def load_vector(mesh: Mesh, g) -> np.ndarray:
    """Interior-node load vector ``b`` for the energy."""
    return _operators(mesh).lump @ cell_load(mesh, g).ravel()


def _grads(ops: _Operators, x: np.ndarray):
    return [(w, [D @ x for D in comps]) for w, comps in ops.pieces]


def _energy(ops, x, b, p, eps):
    e = 0.0
    for w, G in _grads(ops, x):
        s = sum(g * g for g in G) + eps * eps
        e += w * (s ** (p / 2.0)).sum() / p
    return e - b @ x


def _gradient(ops, x, b, p, eps):
    out = -b.copy()
    for (w, comps), (_, G) in zip(ops.pieces, _grads(ops, x)):
        s = sum(g * g for g in G) + eps * eps
        a = s ** ((p - 2.0) / 2.0)
        for D, g in zip(comps, G):
            out += w * (D.T @ (a * g))
    return out


def _hessian(ops, x, p, eps):
    blocks = []
    for (w, comps), (_, G) in zip(ops.pieces, _grads(ops, x)):
        s = sum(g * g for g in G) + eps * eps
        a = s ** ((p - 2.0) / 2.0)
        c = (p - 2.0) * s ** ((p - 4.0) / 2.0)
        blocks.append(
            [[sp.diags(w * (c * G[i] * G[j] + (a if i == j else 0.0))) for j in range(len(G))]
             for i in range(len(G))]
        )
    W = sp.block_diag([sp.bmat(b) for b in blocks], format="csr")
    return (ops.stacked.T @ W @ ops.stacked).tocsc()


def _full(mesh: Mesh, ops: _Operators, x: np.ndarray) -> ScalarField:
    v = np.zeros(int(np.prod(mesh.shape)))
    v[ops.interior] = x
    return ScalarField(mesh, v)


def plap_energy(mesh: Mesh, p: float, u: ScalarField, g, eps_reg: float | None = None) -> float:
    ops = _operators(mesh)
    eps = PlapConfig(eps_reg=eps_reg).eps_for(mesh)
    x = u.values.ravel()[ops.interior]
    return float(_energy(ops, x, load_vector(mesh, g), p, eps))


def plap_residual(mesh: Mesh, p: float, u: ScalarField, g, eps_reg: float | None = None) -> float:
    """Sup over interior nodes of the energy gradient per unit nodal volume.

    This is the defect of the discrete weak form tested against each nodal
    hat function; it is zero for an exact discrete solution and equals the
    load itself at ``u = 0``.
    """
    ops = _operators(mesh)
    eps = PlapConfig(eps_reg=eps_reg).eps_for(mesh)
    x = u.values.ravel()[ops.interior]
    r = _gradient(ops, x, load_vector(mesh, g), p, eps)
    return float(np.abs(r).max() / mesh.nodal_volume) if r.size else 0.0


def _newton(mesh, ops, p, b, x, cfg, eps, history):
    vol = mesh.nodal_volume
    J = _energy(ops, x, b, p, eps)
    res = math.inf
    for it in range(cfg.max_iter):
        grad = _gradient(ops, x, b, p, eps)
        res = float(np.abs(grad).max() / vol)
        if history is not None:
            history.append((len(history), float(J), res))
        if res <= cfg.tol:
            return x, res
        du = spla.spsolve(_hessian(ops, x, p, eps), -grad)
        slope = float(grad @ du)
        if not np.all(np.isfinite(du)) or slope >= 0:
            du = -grad / vol
            slope = float(grad @ du)
        t = 1.0
        slack = 1e-14 * (abs(J) + 1.0)
        while True:
            xn = x + t * du
            Jn = _energy(ops, xn, b, p, eps)
            if Jn <= J + cfg.armijo * t * slope + slack:
                break
            t *= cfg.line_search_shrink
            if t < 1e-14:
                raise IterationLimitError(
                    f"line search stalled at iteration {it} (residual {res:.3e})",
                    iterate=_full(mesh, ops, x),
                    residual=res,
                    history=history,
                )
        x, J = xn, Jn
    grad = _gradient(ops, x, b, p, eps)
    res = float(np.abs(grad).max() / vol)
    if res <= cfg.tol:
        return x, res
    raise IterationLimitError(
        f"p-Laplacian solve (p={p}) did not reach tol={cfg.tol:g} in "
        f"{cfg.max_iter} iterations; residual {res:.3e}",
        iterate=_full(mesh, ops, x),
        residual=res,
        history=history,
    )


def plap_solve(
    mesh: Mesh,
    p: float,
    g,
    cfg: PlapConfig | None = None,
    history: list | None = None,
) -> ScalarField:
    """Solve ``-div(|grad u|^(p-2) grad u) = g`` with ``u = 0`` on the boundary.

    The start point is the p = 2 solution for the same load (one factorized
    linear solve). Exponents farther than 1 from 2 are reached by
    continuation in p. Damped Newton with backtracking then minimizes the
    regularized energy until the residual drops below ``cfg.tol``.

    If ``history`` is a list, ``(iteration, energy, residual)`` tuples of the
    Newton iterates are appended to it.

    Raises:
        IterationLimitError: carries the last iterate and residual.
        NonIntegrableExponentError: singular load with ``mu <= -1``.
    """
    if not p > 1:
        raise ConfigurationError(f"p must exceed 1, got {p}")
    cfg = cfg or PlapConfig()
    ops = _operators(mesh)
    eps = cfg.eps_for(mesh)
    b = load_vector(mesh, g)
    x = _laplacian_lu(mesh).solve(b)
    if p == 2.0:
        if history is not None:
            grad = _gradient(ops, x, b, 2.0, eps)
            history.append((0, float(_energy(ops, x, b, 2.0, eps)), float(np.abs(grad).max() / mesh.nodal_volume)))
        return _full(mesh, ops, x)
    for pk, ek, final in _stages(p, eps, _gradient_scale(ops, x)):
        stage_cfg = cfg if final else PlapConfig(
            eps_reg=ek, tol=max(cfg.tol, 1e-6), max_iter=cfg.max_iter,
            line_search_shrink=cfg.line_search_shrink, armijo=cfg.armijo,
        )
        x, res = _newton(mesh, ops, pk, b, x, stage_cfg, ek, history if final else None)
        log.debug("stage p=%.4g eps=%.3g residual %.3e", pk, ek, res)
    return _full(mesh, ops, x)


def _gradient_scale(ops: _Operators, x: np.ndarray) -> float:
    return max(float(max(np.abs(D @ x).max() for D in ops.pieces[0][1])), 1e-300)


def _stages(p: float, eps: float, scale: float):
    """Continuation path ``(p_k, eps_k, is_final)`` from the p = 2 start.

    Exponents move toward ``p`` in steps of at most 1. For p < 2 the
    regularization additionally starts at 10% of the gradient scale and
    shrinks tenfold per stage, since the flux ``|G|^(p-2) G`` has unbounded
    slope at ``G = 0`` and full Newton steps there overshoot.
    """
    n_p = max(1, math.ceil(abs(p - 2.0) - 1e-12))
    path = [(2.0 + (p - 2.0) * k / n_p, eps) for k in range(1, n_p + 1)]
    if p < 2.0:
        e = 0.1 * scale
        while e > 10 * eps:
            path.insert(len(path) - 1, (p, e))
            e *= 0.1
    return [(pk, ek, i == len(path) - 1) for i, (pk, ek) in enumerate(path)]
