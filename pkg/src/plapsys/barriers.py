"""
Comparison functions for the singular system and their distance bounds.

For each equation index i, with ``s = alpha_i + beta_i``:

* ``y``      solves ``-Delta_p y = 1 + d^s``;
* ``z``      solves ``-Delta_p z = d^s`` away from the boundary layer
             ``{d < delta}`` and ``-1`` inside it;
* ``w_hat``  is the torsion function, ``-Delta_p w = 1``;
* ``w_sing`` solves ``-Delta_p w = w^(-gamma)``.

The layer makes ``z`` dip near the boundary, so positivity of ``z`` is
checked after the solve and ``delta`` is halved until it holds. All
constants relating these fields to ``d`` (``c0`` .. ``c3``) are measured on
the mesh.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BarrierFailure, ConfigurationError, HypothesisViolation, IterationLimitError
from .mesh import Mesh, ScalarField, norm_sup_grad
from .plap import PlapConfig, SingularLoad, plap_solve

log = logging.getLogger(__name__)

__all__ = [
    "BarrierSet",
    "BarrierOrderReport",
    "build_y",
    "build_z",
    "z_load",
    "build_torsion",
    "build_singular_barrier",
    "build_barriers",
    "distance_ratios",
    "verify_lemma2",
    "default_gamma",
]

MAX_HALVINGS = 6


def _check_band(p: float, s: float) -> None:
    if not -1.0 < s < p - 1.0:
        raise HypothesisViolation(
            f"alpha+beta={s} outside (-1, p-1) = (-1, {p - 1.0:g})"
        )


def distance_ratios(f: ScalarField) -> np.ndarray:
    """``f/d`` at interior nodes."""
    mesh = f.mesh
    inside = mesh.interior_mask
    return f.values[inside] / mesh.dist[inside]


def build_y(mesh: Mesh, p: float, s: float, cfg: PlapConfig | None = None) -> ScalarField:
    """Upper comparison function: load ``1 + d^s``."""
    _check_band(p, s)
    return plap_solve(mesh, p, SingularLoad(1.0, 1.0, s), cfg)


def z_load(mesh: Mesh, s: float, delta: float) -> np.ndarray:
    """Cell-center load of ``z``: ``-1`` where ``d < delta``, ``d^s`` elsewhere."""
    d = mesh.cell_dist
    return np.where(d < delta, -1.0, d**s)


def build_z(
    mesh: Mesh, p: float, s: float, delta: float, cfg: PlapConfig | None = None
) -> tuple[ScalarField, float]:
    """Lower comparison function; returns ``(z, delta_used)``.

    ``delta`` is halved up to six times until ``min z/d > 0`` on the interior.

    Raises:
        BarrierFailure: positivity still fails after the last halving.
    """
    _check_band(p, s)
    if not 0.0 < delta < 0.5 * mesh.inradius:
        raise ConfigurationError(
            f"delta={delta} must lie in (0, inradius/2) = (0, {0.5 * mesh.inradius:g})"
        )
    dl = delta
    for attempt in range(MAX_HALVINGS + 1):
        z = plap_solve(mesh, p, z_load(mesh, s, dl), cfg)
        low = distance_ratios(z).min()
        if low > 0:
            if attempt:
                log.info("z positive after %d halvings (delta=%.4g)", attempt, dl)
            return z, dl
        log.debug("z not positive for delta=%.4g (min z/d=%.3g)", dl, low)
        dl *= 0.5
    raise BarrierFailure(
        f"z stays nonpositive after {MAX_HALVINGS} halvings of delta={delta} "
        f"(p={p}, s={s}, last min z/d={low:.3g})"
    )


def build_torsion(mesh: Mesh, p: float, cfg: PlapConfig | None = None) -> tuple[ScalarField, float]:
    """Torsion function and its gradient bound ``L_hat``."""
    w = plap_solve(mesh, p, 1.0, cfg)
    return w, norm_sup_grad(w)


def build_singular_barrier(
    mesh: Mesh,
    p: float,
    gamma: float,
    cfg: PlapConfig | None = None,
    tol: float = 1e-8,
    max_outer: int = 100,
    history: list | None = None,
) -> ScalarField:
    """Solve ``-Delta_p w = w^(-gamma)`` by outer fixed-point sweeps.

    Starts from the torsion function. Each sweep freezes the load at
    ``max(w, floor)^(-gamma)`` on cell centers, with ``floor`` set to
    ``1e-4`` times the smallest interior distance so the load stays finite
    next to the boundary.
    """
    if not 0.0 < gamma < 1.0:
        raise HypothesisViolation(f"gamma must lie in (0, 1), got {gamma}")
    hist = history if history is not None else []
    w, _ = build_torsion(mesh, p, cfg)
    floor = 1e-4 * mesh.dist[mesh.interior_mask].min()
    for k in range(max_outer):
        wc = np.maximum(mesh.cell_average(w.values), floor)
        w_new = plap_solve(mesh, p, wc ** (-gamma), cfg)
        diff = float(np.abs(w_new.values - w.values).max())
        hist.append(diff)
        w = w_new
        if diff < tol:
            return w
    raise IterationLimitError(
        f"singular barrier did not settle in {max_outer} sweeps (last change {diff:.3e})",
        iterate=w,
        residual=diff,
        history=hist,
    )


def default_gamma(s: tuple[float, float]) -> float:
    """Midpoint of the admissible band ``(max|s_i|, 1)``."""
    return 0.5 * (max(abs(v) for v in s) + 1.0)


@dataclass
class BarrierSet:
    """All comparison fields for both equations plus fitted constants.

    Pairs are indexed by equation (0 for u, 1 for v). ``c0``/``c1`` bound
    ``z/d`` from below and ``y/d`` from above over both indices; ``c2``/``c3``
    do the same for the singular barrier.
    """

    mesh: Mesh
    p: tuple[float, float]
    s: tuple[float, float]
    y: tuple[ScalarField, ScalarField]
    z: tuple[ScalarField, ScalarField]
    w_hat: tuple[ScalarField, ScalarField]
    w_sing: tuple[ScalarField, ScalarField]
    delta: tuple[float, float]
    gamma_sing: float
    L_hat: float
    c0: float = field(init=False)
    c1: float = field(init=False)
    c2: float = field(init=False)
    c3: float = field(init=False)
    L: float = field(init=False)

    def __post_init__(self):
        self.c0 = float(min(distance_ratios(z).min() for z in self.z))
        self.c1 = float(max(distance_ratios(y).max() for y in self.y))
        self.c2 = float(min(distance_ratios(w).min() for w in self.w_sing))
        self.c3 = float(max(distance_ratios(w).max() for w in self.w_sing))
        # torsion bound: max of L_hat and w_hat/d away from the boundary layer
        mesh = self.mesh
        far = mesh.interior_mask & (mesh.dist >= min(self.delta))
        far_ratio = max((w.values[far] / mesh.dist[far]).max() for w in self.w_hat) if far.any() else 0.0
        self.L = float(max(self.L_hat, far_ratio))

    def report(self) -> dict[str, float]:
        out = {
            "c0": self.c0,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "L_hat": self.L_hat,
            "L": self.L,
            "gamma_sing": self.gamma_sing,
        }
        for i in range(2):
            out[f"delta{i + 1}"] = self.delta[i]
            out[f"p{i + 1}"] = self.p[i]
            out[f"s{i + 1}"] = self.s[i]
        return out


def build_barriers(
    mesh: Mesh,
    p: tuple[float, float],
    s: tuple[float, float],
    delta: float | None = None,
    gamma: float | None = None,
    cfg: PlapConfig | None = None,
) -> BarrierSet:
    """Build every comparison field for both indices.

    ``delta`` defaults to 10% of the inradius; ``gamma`` to
    :func:`default_gamma`. Identical ``(p_i, s_i)`` pairs are solved once.
    """
    delta = 0.1 * mesh.inradius if delta is None else delta
    gamma = default_gamma(s) if gamma is None else gamma
    cache: dict = {}

    def once(key, fn):
        if key not in cache:
            cache[key] = fn()
        return cache[key]

    ys, zs, ws, wss, deltas, lhats = [], [], [], [], [], []
    for pi, si in zip(p, s):
        ys.append(once(("y", pi, si), lambda: build_y(mesh, pi, si, cfg)))
        z, dl = once(("z", pi, si), lambda: build_z(mesh, pi, si, delta, cfg))
        zs.append(z)
        deltas.append(dl)
        w, lh = once(("t", pi), lambda: build_torsion(mesh, pi, cfg))
        ws.append(w)
        lhats.append(lh)
        wss.append(once(("w", pi), lambda: build_singular_barrier(mesh, pi, gamma, cfg)))
    return BarrierSet(
        mesh=mesh,
        p=tuple(p),
        s=tuple(s),
        y=tuple(ys),
        z=tuple(zs),
        w_hat=tuple(ws),
        w_sing=tuple(wss),
        delta=tuple(deltas),
        gamma_sing=gamma,
        L_hat=max(lhats),
    )


@dataclass
class BarrierOrderReport:
    """Fitted distance ratios of ``z`` and ``y`` per index.

    ``ratios[i]`` is ``(min z/d, max z/d, min y/d, max y/d)``. ``drift`` holds
    the relative change of ``c0`` and ``c1`` against a refined mesh when one
    was supplied; growth beyond 20% marks the fit as suspect.
    """

    ratios: list[tuple[float, float, float, float]]
    ordered: list[bool]
    c0: float
    c1: float
    passed: bool
    drift: dict[str, float] | None = None
    suspect: bool = False

    def as_text(self) -> str:
        lines = [f"c0 = {self.c0!r}", f"c1 = {self.c1!r}", f"pass = {self.passed}"]
        for i, (r, ok) in enumerate(zip(self.ratios, self.ordered), start=1):
            names = ("min_z_over_d", "max_z_over_d", "min_y_over_d", "max_y_over_d")
            lines += [f"{n}{i} = {v!r}" for n, v in zip(names, r)]
            lines.append(f"z_le_y{i} = {ok}")
        if self.drift is not None:
            lines += [f"drift_{k} = {v!r}" for k, v in self.drift.items()]
            lines.append(f"suspect = {self.suspect}")
        return "\n".join(lines) + "\n"


def verify_lemma2(bs: BarrierSet, refined: BarrierSet | None = None, atol: float = 1e-12) -> BarrierOrderReport:
    """Check ``c0 d <= z <= y <= c1 d`` on the mesh.

    Passes iff ``min z/d > 0`` and ``z <= y`` at every node (up to ``atol``)
    for both indices.
    """
    ratios, ordered = [], []
    for y, z in zip(bs.y, bs.z):
        rz, ry = distance_ratios(z), distance_ratios(y)
        ratios.append((float(rz.min()), float(rz.max()), float(ry.min()), float(ry.max())))
        ordered.append(bool(np.all(z.values <= y.values + atol)))
    c0 = min(r[0] for r in ratios)
    c1 = max(r[3] for r in ratios)
    passed = c0 > 0 and all(ordered)
    drift, suspect = None, False
    if refined is not None:
        fine = verify_lemma2(refined, atol=atol)
        drift = {"c0": abs(fine.c0 - c0) / abs(c0), "c1": abs(fine.c1 - c1) / abs(c1)}
        suspect = max(drift.values()) > 0.2
    return BarrierOrderReport(ratios, ordered, c0, c1, passed, drift, suspect)
