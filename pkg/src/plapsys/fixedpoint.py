"""
Invariant rectangle and damped Picard iteration for the coupled system.

The rectangle for a constant ``C > 1`` is the set of field pairs with

    z_i / C <= w_i <= C * y_i   and   ||grad w_i||_inf <= C.

``apply_T`` freezes the nonlinearities at a pair ``(w1, w2)`` and solves the
two decoupled p-Laplacian problems. ``select_C`` searches ``C = 2, 4, ...``
for a constant under which the discrete comparison inequalities and the
gradient-norm closure hold, which makes the rectangle invariant under T.
``iterate`` then runs ``w <- (1 - lam) w + lam T(w)`` from the rectangle
midpoint.

All loads are evaluated at cell centers, with solution values interpolated
from the corners and gradients taken from the cell edges. The barrier
constants used by ``select_C`` are fitted at the same points so that the
inequalities it certifies are exactly the ones the discrete comparison
principle consumes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .barriers import BarrierSet, z_load
from .errors import ClosureFailure, ConfigurationError, DomainError, InadmissibleSpecError
from .mesh import Mesh, ScalarField, integrate_singular, norm_sup_grad
from .plap import PlapConfig, plap_residual, plap_solve
from .system import SystemSpec, validate_cdt

log = logging.getLogger(__name__)

__all__ = [
    "Rectangle",
    "Membership",
    "FixpointState",
    "ClosureCheck",
    "frozen_loads",
    "apply_T",
    "quadrature_constants",
    "closure_check",
    "select_C",
    "make_rectangle",
    "membership",
    "c1_distance",
    "certificate",
    "iterate",
]

C_MAX_EXP = 20


def frozen_loads(spec: SystemSpec, w1: ScalarField, w2: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Cell-center loads ``f_i(x, w1, w2, grad w1, grad w2)``.

    Raises:
        DomainError: ``w1`` or ``w2`` is nonpositive at an interior node.
    """
    mesh = w1.mesh
    inside = mesh.interior_mask
    for k, w in enumerate((w1, w2), start=1):
        if np.any(w.values[inside] <= 0):
            raise DomainError(f"w{k} must be positive at every interior node")
    s1, s2 = mesh.cell_average(w1.values), mesh.cell_average(w2.values)
    xi1 = np.sqrt((mesh.cell_gradient(w1.values) ** 2).sum(axis=-1))
    xi2 = np.sqrt((mesh.cell_gradient(w2.values) ** 2).sum(axis=-1))
    return tuple(spec.f[i].evaluate(s1, s2, xi1, xi2) for i in range(2))


def apply_T(
    spec: SystemSpec, mesh: Mesh, w1: ScalarField, w2: ScalarField, cfg: PlapConfig | None = None
) -> tuple[ScalarField, ScalarField]:
    """Solve the two frozen-coefficient problems; they are independent."""
    g1, g2 = frozen_loads(spec, w1, w2)
    return plap_solve(mesh, spec.p[0], g1, cfg), plap_solve(mesh, spec.p[1], g2, cfg)


def quadrature_constants(bs: BarrierSet) -> tuple[float, float]:
    """``min z/d`` and ``max y/d`` over cell centers and both indices."""
    mesh = bs.mesh
    d = mesh.cell_dist
    c0 = min(float((mesh.cell_average(z.values) / d).min()) for z in bs.z)
    c1 = max(float((mesh.cell_average(y.values) / d).max()) for y in bs.y)
    return c0, c1


def _envelope_coefficients(alpha: float, beta: float, c0: float, c1: float) -> tuple[float, float]:
    """Constants K0, K1 with ``K0 C^-(|a|+|b|) d^(a+b) <= w1^a w2^b <= K1 C^(|a|+|b|) d^(a+b)``
    for every pair in the rectangle (case analysis on the exponent signs)."""
    lo = (c0 if alpha >= 0 else c1) ** alpha * (c0 if beta >= 0 else c1) ** beta
    hi = (c1 if alpha >= 0 else c0) ** alpha * (c1 if beta >= 0 else c0) ** beta
    return lo, hi


@dataclass
class ClosureCheck:
    """Worst slacks of the rectangle inequalities at one value of ``C``.

    Slacks are relative (``>= 0`` means satisfied). ``blocking`` names the
    failed inequalities, e.g. ``"upper2"``.
    """

    C: float
    lower: tuple[float, float]
    upper: tuple[float, float]
    norm: tuple[float, float]

    @property
    def blocking(self) -> list[str]:
        out = []
        for name in ("lower", "upper", "norm"):
            for i, v in enumerate(getattr(self, name)):
                if v < 0:
                    out.append(f"{name}{i + 1}")
        return out

    @property
    def ok(self) -> bool:
        return not self.blocking


def closure_check(spec: SystemSpec, bs: BarrierSet, k_p: float, C: float) -> ClosureCheck:
    """Evaluate the three inequality families at ``C``.

    For each index i and cell center q:

    * lower: ``C^-(p-1) load_z(q) <= m K0 C^-(|a|+|b|) d(q)^s``
    * upper: ``C^(p-1) (1 + d(q)^s) >= M K1 C^(|a|+|b|) d(q)^s + 2 C^max(g,t)``
    * norm:  ``M K1 C^(|a|+|b|) mu_hat + 2 |Omega|_r C^max(g,t) <= (C/k_p)^(p-1)``

    with ``mu_hat = (int d^(r s))^(1/r)`` and
    ``|Omega|_r = max(|Omega|, |Omega|^(1/r))``.
    """
    mesh = bs.mesh
    d = mesh.cell_dist
    c0, c1 = quadrature_constants(bs)
    lows, ups, norms = [], [], []
    ones = ScalarField(mesh, 1.0)
    for i in range(2):
        p, a, b = spec.p[i], spec.alpha[i], spec.beta[i]
        s = a + b
        ab = abs(a) + abs(b)
        g = max(spec.gamma[i], spec.theta[i])
        K0, K1 = _envelope_coefficients(a, b, c0, c1)
        ds = d**s
        lhs = C ** (-(p - 1)) * z_load(mesh, s, bs.delta[i])
        rhs = spec.m[i] * K0 * C ** (-ab) * ds
        lows.append(float(((rhs - lhs) / rhs).min()))
        top = C ** (p - 1) * (1.0 + ds)
        need = spec.M[i] * K1 * C**ab * ds + 2.0 * C**g
        ups.append(float(((top - need) / need).min()))
        if spec.r[i] * s <= -1.0:
            norms.append(-np.inf)
            continue
        mu_hat = integrate_singular(spec.r[i] * s, ones) ** (1.0 / spec.r[i])
        omega = max(mesh.measure, mesh.measure ** (1.0 / spec.r[i]))
        need = spec.M[i] * K1 * C**ab * mu_hat + 2.0 * omega * C**g
        cap = (C / k_p) ** (p - 1)
        norms.append(float((cap - need) / need))
    return ClosureCheck(C, tuple(lows), tuple(ups), tuple(norms))


def select_C(spec: SystemSpec, bs: BarrierSet, k_p: float, max_exp: int = C_MAX_EXP) -> float:
    """Smallest ``C`` in ``2, 4, ..., 2**max_exp`` passing :func:`closure_check`.

    Raises:
        InadmissibleSpecError: the spec fails the admissibility conditions.
        ClosureFailure: no candidate works; ``blocking`` lists the failed
            inequalities at the largest candidate.
    """
    report = validate_cdt(spec)
    if not report.admissible:
        raise InadmissibleSpecError("spec fails the admissibility conditions", report)
    if tuple(bs.p) != tuple(spec.p) or not np.allclose(bs.s, spec.s):
        raise ConfigurationError("barriers were built for different exponents than the spec")
    if k_p <= 0:
        raise ConfigurationError("k_p must be positive")
    check = None
    for e in range(1, max_exp + 1):
        check = closure_check(spec, bs, k_p, 2.0**e)
        if check.ok:
            log.info("selected C=%g", check.C)
            return check.C
    raise ClosureFailure(
        f"no C <= 2^{max_exp} closes the rectangle; blocking: {', '.join(check.blocking)}",
        blocking=check.blocking,
    )


@dataclass
class Rectangle:
    """The invariant set: value bounds per component plus a gradient cap."""

    C: float
    lower: tuple[ScalarField, ScalarField]
    upper: tuple[ScalarField, ScalarField]
    grad_cap: float

    @property
    def midpoint(self) -> tuple[ScalarField, ScalarField]:
        return tuple(0.5 * (lo + up) for lo, up in zip(self.lower, self.upper))


def make_rectangle(bs: BarrierSet, C: float) -> Rectangle:
    if not C > 1:
        raise ConfigurationError(f"rectangle constant must exceed 1, got {C}")
    lower = tuple(z * (1.0 / C) for z in bs.z)
    upper = tuple(y * C for y in bs.y)
    return Rectangle(C, lower, upper, C)


@dataclass
class Membership:
    """Result of testing a pair against a rectangle.

    Violations are positive amounts by which a bound is exceeded
    (``max(lower - u)``, ``max(u - upper)``, ``max|grad u| - C``), taken over
    both components at interior nodes; values ``<= 0`` mean the bound holds.
    """

    in_rectangle: bool
    grad_within_cap: bool
    lower_violation: float
    upper_violation: float
    grad_excess: float


def membership(rect: Rectangle, u: ScalarField, v: ScalarField, tol: float = 1e-10) -> Membership:
    inside = u.mesh.interior_mask
    low = max(float((lo.values - w.values)[inside].max()) for lo, w in zip(rect.lower, (u, v)))
    up = max(float((w.values - hi.values)[inside].max()) for hi, w in zip(rect.upper, (u, v)))
    grad = max(norm_sup_grad(u), norm_sup_grad(v)) - rect.grad_cap
    return Membership(low <= tol and up <= tol, grad <= 0, low, up, grad)


def c1_distance(a: ScalarField, b: ScalarField) -> float:
    """``sup|a - b| + sup|grad(a - b)|``."""
    diff = a - b
    return float(np.abs(diff.values).max()) + norm_sup_grad(diff)


def certificate(
    spec: SystemSpec, u: ScalarField, v: ScalarField, cfg: PlapConfig | None = None
) -> tuple[float, float]:
    """Residuals of ``(u, v)`` against the loads frozen at ``(u, v)`` itself."""
    mesh = u.mesh
    g1, g2 = frozen_loads(spec, u, v)
    eps = (cfg or PlapConfig()).eps_reg
    return (
        plap_residual(mesh, spec.p[0], u, g1, eps),
        plap_residual(mesh, spec.p[1], v, g2, eps),
    )


@dataclass
class FixpointState:
    """Progress of the damped iteration.

    ``status`` is one of ``running``, ``converged``, ``iteration-limit`` or
    ``left-set``. ``history`` has one row per step with the residual and the
    membership of the undamped image ``T(w)``.
    """

    iterate: tuple[ScalarField, ScalarField]
    k: int = 0
    residual_history: list[float] = field(default_factory=list)
    in_rectangle: bool = True
    grad_within_cap: bool = True
    status: str = "running"
    history: list[dict] = field(default_factory=list)
    certificate: tuple[float, float] | None = None


def iterate(
    spec: SystemSpec,
    mesh: Mesh,
    rect: Rectangle,
    damping: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 200,
    cfg: PlapConfig | None = None,
    clamp_tol: float = 1e-10,
    start: tuple[ScalarField, ScalarField] | None = None,
) -> FixpointState:
    """Damped Picard iteration inside the rectangle.

    Each step clamps the damped update into the value bounds. Clamping by
    more than ``clamp_tol``, or an image whose gradient exceeds the cap,
    ends the run with status ``left-set``. The run converges once the
    C^1-type step size is below ``tol`` and the self-consistency residuals
    of :func:`certificate` are at most ``10 * tol``.
    """
    if not 0 < damping <= 1:
        raise ConfigurationError(f"damping must lie in (0, 1], got {damping}")
    if tol <= 0 or max_iter < 1:
        raise ConfigurationError("tol must be positive and max_iter at least 1")
    w = start if start is not None else rect.midpoint
    state = FixpointState(iterate=w)
    for k in range(1, max_iter + 1):
        t = apply_T(spec, mesh, *w, cfg)
        mem = membership(rect, *t, tol=clamp_tol)
        damped = [(1 - damping) * wi + damping * ti for wi, ti in zip(w, t)]
        clamped = [
            ScalarField(mesh, np.clip(x.values, lo.values, hi.values))
            for x, lo, hi in zip(damped, rect.lower, rect.upper)
        ]
        shift = max(float(np.abs(c.values - x.values).max()) for c, x in zip(clamped, damped))
        res = max(c1_distance(c, wi) for c, wi in zip(clamped, w))
        state.k = k
        state.residual_history.append(res)
        state.history.append(
            {
                "k": k,
                "residual": res,
                "lower_violation": mem.lower_violation,
                "upper_violation": mem.upper_violation,
                "grad_excess": mem.grad_excess,
                "clamp_shift": shift,
                "in_rectangle": mem.in_rectangle,
                "grad_within_cap": mem.grad_within_cap,
            }
        )
        state.in_rectangle, state.grad_within_cap = mem.in_rectangle, mem.grad_within_cap
        w = tuple(clamped)
        state.iterate = w
        if shift > clamp_tol or not mem.grad_within_cap:
            state.status = "left-set"
            log.warning("iterate left the rectangle at step %d (clamp %.3e, grad excess %.3e)",
                        k, shift, mem.grad_excess)
            return state
        if res < tol:
            cert = certificate(spec, *w, cfg)
            state.certificate = cert
            if max(cert) <= 10 * tol:
                end = membership(rect, *w, tol=clamp_tol)
                state.in_rectangle, state.grad_within_cap = end.in_rectangle, end.grad_within_cap
                state.status = "converged"
                return state
    state.status = "iteration-limit"
    return state
