"""
Empirical checks of the a priori estimates behind the existence argument.

* :func:`calibrate_kp` fits the constant in ``||grad u||_inf <= k_p ||h||_r^(1/(p-1))``
  on a family of loads, and :func:`validate_kp` tests it on unseen loads.
* :func:`check_hardy` measures ``int d^mu |u| / ||grad u||_p``.
* :func:`energy_chain_report` tests the energy identity and the envelope
  chain at a computed fixed point.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, ConfigurationError, PlapsysError
from .fixedpoint import frozen_loads
from .mesh import Mesh, ScalarField, integrate_singular, norm_sup_grad
from .plap import PlapConfig, SingularLoad, cell_load, load_norm, load_vector, plap_solve
from .system import SystemSpec, validate_cdt

log = logging.getLogger(__name__)

__all__ = [
    "CalibrationSample",
    "CalibrationReport",
    "ValidationResult",
    "EnergyChainReport",
    "load_family",
    "calibrate_kp",
    "validate_kp",
    "check_hardy",
    "hardy_sweep",
    "energy_chain_report",
]

CALIBRATION_SEED = 0
HOLDOUT_SEED = 1


@dataclass
class CalibrationSample:
    problem_id: str
    grad_sup: float
    load_norm: float
    ratio: float


@dataclass
class CalibrationReport:
    """Calibrated gradient constant and the samples it was fitted on.

    ``hardy_constant`` is the largest observed ``int |u| / ||grad u||_p``
    over the calibration solutions (the ``mu = 0`` case).
    """

    p: float
    r: float
    k_p: float
    safety: float
    samples: list[CalibrationSample]
    hardy_constant: float
    skipped: list[str] = field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max(s.ratio for s in self.samples)

    def as_text(self) -> str:
        lines = [
            f"p = {self.p!r}",
            f"r = {self.r!r}",
            f"k_p = {self.k_p!r}",
            f"safety = {self.safety!r}",
            f"max_ratio = {self.max_ratio!r}",
            f"hardy_constant = {self.hardy_constant!r}",
            f"samples = {len(self.samples)}",
            f"skipped = {len(self.skipped)}",
        ]
        return "\n".join(lines) + "\n"

    def sample_rows(self) -> list[dict]:
        return [vars(s).copy() for s in self.samples]


def load_family(count: int, r: float, seed: int, prefix: str = "h") -> list[tuple[str, SingularLoad]]:
    """Random loads ``c0 + c1 d^mu`` with ``mu`` in ``(-1/r, 0]``.

    Every fourth load is a pure constant. Different seeds give disjoint
    families with probability one.
    """
    if r <= 1:
        raise ConfigurationError(f"r must exceed 1, got {r}")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        if k % 4 == 0:
            load = SingularLoad(float(rng.uniform(0.1, 3.0)), 0.0, 0.0)
        else:
            mu = -float(rng.uniform(0.0, 0.95)) / r
            load = SingularLoad(float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.1, 2.0)), mu)
        out.append((f"{prefix}{seed}-{k}", load))
    return out


def _named(problems) -> list[tuple[str, object]]:
    out = []
    for k, item in enumerate(problems):
        if isinstance(item, tuple) and len(item) == 2 and isinstance(item[0], str):
            out.append(item)
        else:
            out.append((f"h{k}", item))
    return out


def _gradient_ratio(mesh: Mesh, p: float, g, r: float, cfg: PlapConfig | None):
    u = plap_solve(mesh, p, g, cfg)
    gs = norm_sup_grad(u)
    hn = load_norm(mesh, g, r)
    return u, gs, hn, gs / hn ** (1.0 / (p - 1.0))


def calibrate_kp(
    mesh: Mesh,
    p: float,
    problems,
    r: float = 3.0,
    safety: float = 1.5,
    cfg: PlapConfig | None = None,
) -> CalibrationReport:
    """Fit ``k_p = safety * max ||grad u||_inf / ||h||_r^(1/(p-1))``.

    ``problems`` holds loads or ``(id, load)`` pairs. A load whose solve
    fails is skipped with a warning.

    Raises:
        CalibrationError: no problem could be solved.
    """
    if safety < 1:
        raise ConfigurationError(f"safety must be at least 1, got {safety}")
    items = _named(problems)
    if not items:
        raise CalibrationError("calibration set is empty")
    samples, skipped, hardy = [], [], 0.0
    for pid, g in items:
        if isinstance(g, SingularLoad) and g.c1 != 0 and g.mu * r <= -1:
            raise ConfigurationError(f"load {pid} is not in L^{r}: mu={g.mu}")
        try:
            u, gs, hn, ratio = _gradient_ratio(mesh, p, g, r, cfg)
        except PlapsysError as exc:
            warnings.warn(f"skipping calibration problem {pid}: {exc}", RuntimeWarning, stacklevel=2)
            skipped.append(pid)
            continue
        samples.append(CalibrationSample(pid, gs, hn, ratio))
        hardy = max(hardy, check_hardy(mesh, p, 0.0, u))
    if not samples:
        raise CalibrationError("every calibration problem failed to solve")
    k_p = safety * max(s.ratio for s in samples)
    log.info("calibrated k_p=%.6g over %d problems", k_p, len(samples))
    return CalibrationReport(p, r, k_p, safety, samples, hardy, skipped)


@dataclass
class ValidationResult:
    problem_id: str
    grad_sup: float
    load_norm: float
    bound: float
    holds: bool

    @property
    def slack(self) -> float:
        return self.bound - self.grad_sup


def validate_kp(
    mesh: Mesh, p: float, k_p: float, problems, r: float = 3.0, cfg: PlapConfig | None = None
) -> list[ValidationResult]:
    """Test ``||grad u||_inf <= k_p ||h||_r^(1/(p-1))`` on each problem."""
    out = []
    for pid, g in _named(problems):
        _, gs, hn, _ = _gradient_ratio(mesh, p, g, r, cfg)
        bound = k_p * hn ** (1.0 / (p - 1.0))
        out.append(ValidationResult(pid, gs, hn, bound, gs <= bound))
    return out


def _grad_p_norm(u: ScalarField, p: float) -> float:
    """``(sum over cells of the corner-averaged |grad u|^p vol)^(1/p)``."""
    mesh = u.mesh
    G = mesh.corner_gradients(u.values)
    mag = np.sqrt((G**2).sum(axis=-1)) ** p
    return float(mag.mean(axis=0).sum() * mesh.cell_volume) ** (1.0 / p)


def check_hardy(mesh: Mesh, p: float, mu: float, u: ScalarField) -> float:
    """``int d^mu |u| / ||grad u||_p``; zero for a field with zero gradient."""
    if mu <= -1:
        raise ConfigurationError(f"mu must exceed -1, got {mu}")
    if u.mesh != mesh:
        raise ConfigurationError("field lives on a different mesh")
    den = _grad_p_norm(u, p)
    if den == 0:
        return 0.0
    return integrate_singular(mu, abs(u)) / den


def hardy_sweep(meshes: list[Mesh], p: float, mu: float, field_fn) -> list[float]:
    """Hardy ratios of ``field_fn(mesh)`` across a list of meshes."""
    return [check_hardy(m, p, mu, field_fn(m)) for m in meshes]


@dataclass
class EnergyChainReport:
    """Discrete energy identity and envelope chain, per component.

    For component i with solution w and frozen load f_i:

    * ``energy``   the flux pairing ``sum a |G|^2`` (the discrete ``int |grad w|^p``);
    * ``pairing``  the load tested with w, ``int f_i w``;
    * ``chain``    ``M_eff (int d^s w + int |grad u|^g w + int |grad v|^t w)``
      with ``M_eff = max(M_i K_i, 1)``, an upper bound for ``pairing``;
    * ``hardy``    ``int d^s w / ||grad w||_p``.

    Slacks are ``chain - pairing`` (must be ``>= 0``) and the identity gap
    ``|energy - pairing|``. ``exponents`` holds the margins of the exponent
    inequalities that close the estimate.
    """

    energy: tuple[float, float]
    pairing: tuple[float, float]
    chain: tuple[float, float]
    hardy: tuple[float, float]
    exponents: dict[str, float]

    @property
    def identity_gap(self) -> tuple[float, float]:
        return tuple(abs(e - q) for e, q in zip(self.energy, self.pairing))

    @property
    def chain_slack(self) -> tuple[float, float]:
        return tuple(c - q for c, q in zip(self.chain, self.pairing))

    @property
    def holds(self) -> bool:
        return all(s >= 0 for s in self.chain_slack) and all(v >= 0 for v in self.exponents.values())

    def as_text(self) -> str:
        lines = []
        for i in range(2):
            k = i + 1
            lines += [
                f"energy{k} = {self.energy[i]!r}",
                f"pairing{k} = {self.pairing[i]!r}",
                f"identity_gap{k} = {self.identity_gap[i]!r}",
                f"chain{k} = {self.chain[i]!r}",
                f"chain_slack{k} = {self.chain_slack[i]!r}",
                f"hardy{k} = {self.hardy[i]!r}",
            ]
        lines += [f"{name} = {v!r}" for name, v in self.exponents.items()]
        lines.append(f"holds = {self.holds}")
        return "\n".join(lines) + "\n"


def _flux_pairing(u: ScalarField, p: float, eps: float) -> float:
    mesh = u.mesh
    G = mesh.corner_gradients(u.values)
    sq = (G**2).sum(axis=-1)
    a = (sq + eps**2) ** ((p - 2.0) / 2.0)
    return float((a * sq).mean(axis=0).sum() * mesh.cell_volume)


def energy_chain_report(
    spec: SystemSpec, mesh: Mesh, u: ScalarField, v: ScalarField, cfg: PlapConfig | None = None
) -> EnergyChainReport:
    """Evaluate both sides of the energy chain at ``(u, v)``.

    Report-only: a pair that is not a solution may show violated
    inequalities.
    """
    cfg = cfg or PlapConfig()
    eps = cfg.eps_for(mesh)
    loads = frozen_loads(spec, u, v)
    d = mesh.cell_dist
    s1, s2 = mesh.cell_average(u.values), mesh.cell_average(v.values)
    xi = [np.sqrt((mesh.cell_gradient(w.values) ** 2).sum(axis=-1)) for w in (u, v)]
    vol = mesh.cell_volume
    energy, pairing, chain, hardy = [], [], [], []
    for i, w in enumerate((u, v)):
        wc = mesh.cell_average(w.values)
        energy.append(_flux_pairing(w, spec.p[i], eps))
        b = load_vector(mesh, cell_load(mesh, loads[i]))
        pairing.append(float(b @ w.values[mesh.interior_mask]))
        s = spec.s[i]
        K = float((s1 ** spec.alpha[i] * s2 ** spec.beta[i] / d**s).max())
        M_eff = max(spec.M[i] * K, 1.0)
        terms = (d**s + xi[0] ** spec.gamma[i] + xi[1] ** spec.theta[i]) * wc
        chain.append(M_eff * float(terms.sum() * vol))
        hardy.append(check_hardy(mesh, spec.p[i], s, w) if s > -1 else float("inf"))
    exps = {f"{c.name}{c.index}": c.margin for c in validate_cdt(spec).consequence}
    return EnergyChainReport(tuple(energy), tuple(pairing), tuple(chain), tuple(hardy), exps)
