"""
Problem definition: parameters, nonlinearities and admissibility.

Nonlinearities are written in a small closed language and normalized to a
sum of monomials

    coef * s1^a * s2^b * |xi1|^c * |xi2|^d

where ``s1, s2`` are the solution values and ``xi1, xi2`` the gradient
magnitudes. Grammar (whitespace free)::

    expr   := term ('+' term)*
    term   := factor ('*' factor)*
    factor := atom (('^' | '**') number)?
    atom   := number | s1 | s2 | xi1 | xi2 | '|xi1|' | '|xi2|' | '(' expr ')'

Exponents must be numeric constants (a leading minus is allowed). Products
of sums are expanded. A power may only be applied to a single monomial.
The keyword ``power`` stands for ``m_i*s1^alpha_i*s2^beta_i`` plus
``grad_coef*(|xi1|^gamma_i + |xi2|^theta_i)`` when ``grad_coef > 0``, and
follows later parameter overrides.

Configs are INI files with sections ``domain``, ``exponents``,
``envelope``, ``f1`` and ``f2``; see :func:`parse_spec`.
"""

from __future__ import annotations

import ast
import configparser
import io
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError, SpecInvalidError

__all__ = [
    "Monomial",
    "NonlinearityRule",
    "SystemSpec",
    "CdtReport",
    "EnvelopeReport",
    "parse_rule",
    "validate_cdt",
    "eval_f",
    "check_envelope",
    "parse_spec",
    "load_spec",
    "dump_spec",
]

_NAMES = {"s1": 0, "s2": 1, "xi1": 2, "xi2": 3}


@dataclass(frozen=True)
class Monomial:
    coef: float
    exps: tuple[float, float, float, float]  # s1, s2, |xi1|, |xi2|

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(self.coef * other.coef, tuple(a + b for a, b in zip(self.exps, other.exps)))

    def __pow__(self, k: float) -> "Monomial":
        if self.coef <= 0:
            raise ConfigurationError("cannot raise a nonpositive coefficient to a power")
        return Monomial(self.coef**k, tuple(a * k for a in self.exps))

    def to_text(self) -> str:
        parts = [repr(float(self.coef))]
        for name, e in zip(("s1", "s2", "|xi1|", "|xi2|"), self.exps):
            if e != 0:
                parts.append(f"{name}^{e!r}")
        return "*".join(parts)


@dataclass(frozen=True)
class NonlinearityRule:
    """A positive nonlinearity in monomial normal form."""

    terms: tuple[Monomial, ...]

    def __post_init__(self):
        if not self.terms:
            raise ConfigurationError("empty nonlinearity")
        if any(t.coef <= 0 for t in self.terms):
            raise ConfigurationError("all coefficients must be positive")
        if all(t.exps[2] != 0 or t.exps[3] != 0 for t in self.terms):
            raise ConfigurationError(
                "nonlinearity must contain a gradient-free term to stay positive"
            )

    def evaluate(self, s1, s2, xi1, xi2):
        s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
        g1, g2 = np.abs(np.asarray(xi1, dtype=float)), np.abs(np.asarray(xi2, dtype=float))
        out = 0.0
        for t in self.terms:
            a, b, c, d = t.exps
            out = out + t.coef * s1**a * s2**b * g1**c * g2**d
        return out

    def to_text(self) -> str:
        return " + ".join(t.to_text() for t in self.terms)


def _expand(node) -> list[Monomial]:
    if isinstance(node, ast.Expression):
        return _expand(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        if node.value <= 0:
            raise ConfigurationError(f"constants must be positive, got {node.value}")
        return [Monomial(float(node.value), (0.0, 0.0, 0.0, 0.0))]
    if isinstance(node, ast.Name):
        if node.id not in _NAMES:
            raise ConfigurationError(f"unknown variable {node.id!r}; use s1, s2, xi1, xi2")
        e = [0.0] * 4
        e[_NAMES[node.id]] = 1.0
        return [Monomial(1.0, tuple(e))]
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Add):
        return _expand(node.left) + _expand(node.right)
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Mult):
        return [a * b for a in _expand(node.left) for b in _expand(node.right)]
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Pow):
        base = _expand(node.left)
        if len(base) != 1:
            raise ConfigurationError("a power may only be applied to a single monomial")
        return [base[0] ** _number(node.right)]
    raise ConfigurationError(f"unsupported construct {ast.dump(node)}")


def _number(node) -> float:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    raise ConfigurationError("exponents must be numeric constants")


def parse_rule(text: str) -> NonlinearityRule:
    """Parse a nonlinearity expression into normal form."""
    src = re.sub(r"\|\s*(xi[12])\s*\|", r"\1", text.strip()).replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse nonlinearity {text!r}: {exc.msg}") from None
    return NonlinearityRule(tuple(_expand(tree)))


Pair = tuple[float, float]


@dataclass(frozen=True)
class SystemSpec:
    """Parameters of the system and its two nonlinearities.

    ``f_text`` keeps the source expressions (possibly the keyword ``power``)
    so that configs round-trip and parameter overrides regenerate the rules.
    """

    N: int
    extents: tuple[Pair, ...]
    p: Pair
    alpha: Pair
    beta: Pair
    gamma: Pair
    theta: Pair
    m: Pair
    M: Pair
    r: Pair
    f_text: tuple[str, str]
    grad_coef: Pair = (0.0, 0.0)
    f: tuple[NonlinearityRule, NonlinearityRule] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        rules = []
        for i, text in enumerate(self.f_text):
            if text.strip().lower() == "power":
                text = self.power_text(i)
            rules.append(parse_rule(text))
        object.__setattr__(self, "f", tuple(rules))

    def power_text(self, i: int) -> str:
        m, a, b = float(self.m[i]), float(self.alpha[i]), float(self.beta[i])
        t = f"{m!r}*s1^{a!r}*s2^{b!r}"
        k = float(self.grad_coef[i])
        if k > 0:
            t += f" + {k!r}*|xi1|^{float(self.gamma[i])!r} + {k!r}*|xi2|^{float(self.theta[i])!r}"
        return t

    @property
    def s(self) -> Pair:
        """``alpha_i + beta_i``."""
        return (self.alpha[0] + self.beta[0], self.alpha[1] + self.beta[1])

    def with_params(self, **kw) -> "SystemSpec":
        """Copy with scalar overrides such as ``gamma1=0.3`` or ``p2=3``."""
        updates: dict = {}
        for key, val in kw.items():
            m = re.fullmatch(r"(p|alpha|beta|gamma|theta|m|M|r|grad_coef)([12])", key)
            if m:
                name, i = m.group(1), int(m.group(2)) - 1
                cur = list(updates.get(name, getattr(self, name)))
                cur[i] = float(val)
                updates[name] = tuple(cur)
            elif key == "N":
                updates["N"] = int(val)
            else:
                raise ConfigurationError(f"unknown spec parameter {key!r}")
        return replace(self, **updates)

    def to_dict(self) -> dict:
        return {
            "domain": {"N": self.N, "extents": [list(e) for e in self.extents]},
            "exponents": {k: list(getattr(self, k)) for k in ("p", "alpha", "beta", "gamma", "theta", "r")},
            "envelope": {"m": list(self.m), "M": list(self.M)},
            "f1": {"expr": self.f_text[0], "grad_coef": self.grad_coef[0], "normal_form": self.f[0].to_text()},
            "f2": {"expr": self.f_text[1], "grad_coef": self.grad_coef[1], "normal_form": self.f[1].to_text()},
        }


@dataclass
class Condition:
    name: str
    index: int
    passed: bool
    margin: float  # bound minus value; negative when violated

    def line(self) -> str:
        return f"{self.name}{self.index} = {'pass' if self.passed else 'FAIL'} (margin {self.margin!r})"


@dataclass
class CdtReport:
    conditions: list[Condition]
    consequence: list[Condition]

    @property
    def admissible(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def consequence_holds(self) -> bool:
        return all(c.passed for c in self.consequence)

    def get(self, name: str, index: int) -> Condition:
        for c in self.conditions + self.consequence:
            if c.name == name and c.index == index:
                return c
        raise KeyError((name, index))

    def as_text(self) -> str:
        lines = [f"admissible = {self.admissible}"]
        lines += [c.line() for c in self.conditions]
        lines += [c.line() for c in self.consequence]
        return "\n".join(lines) + "\n"


def validate_cdt(spec: SystemSpec) -> CdtReport:
    """Check the admissibility conditions on the exponents.

    Per index i: ``r_i > N``; ``-1/r_i <= alpha_i + beta_i < (p_i - 1)/r_i``;
    ``max(gamma_i, theta_i) < (p_i - 1)/r_i``. Also reports the derived
    exponent bounds ``max_i gamma_i p_i' < p_1`` and ``max_i theta_i p_i' < p_2``
    used in the energy estimate. Margins are ``bound - value``.
    """
    conds = []
    for i in range(2):
        p, r = spec.p[i], spec.r[i]
        s = spec.alpha[i] + spec.beta[i]
        top = (p - 1.0) / r
        conds.append(Condition("r_gt_N", i + 1, r > spec.N, r - spec.N))
        conds.append(Condition("s_lower", i + 1, s >= -1.0 / r, s + 1.0 / r))
        conds.append(Condition("s_upper", i + 1, s < top, top - s))
        g = max(spec.gamma[i], spec.theta[i])
        conds.append(Condition("grad_growth", i + 1, g < top, top - g))
        conds.append(Condition("p_gt_one", i + 1, p > 1.0, p - 1.0))
    conj = [q / (q - 1.0) for q in spec.p]
    gmax = max(spec.gamma[i] * conj[i] for i in range(2))
    tmax = max(spec.theta[i] * conj[i] for i in range(2))
    cons = [
        Condition("gamma_conj", 1, gmax < spec.p[0], spec.p[0] - gmax),
        Condition("theta_conj", 2, tmax < spec.p[1], spec.p[1] - tmax),
    ]
    return CdtReport(conds, cons)


def eval_f(spec: SystemSpec, i: int, x, s1, s2, xi1, xi2):
    """Evaluate ``f_i`` (``i`` is 1 or 2). ``x`` is accepted for signature
    compatibility; rules carry no explicit space dependence."""
    if i not in (1, 2):
        raise ConfigurationError(f"nonlinearity index must be 1 or 2, got {i}")
    if np.any(np.asarray(s1) <= 0) or np.any(np.asarray(s2) <= 0):
        raise DomainError("nonlinearities are defined only for s1, s2 > 0")
    return spec.f[i - 1].evaluate(s1, s2, xi1, xi2)


@dataclass
class EnvelopeReport:
    samples: int
    lower_margin: Pair  # worst relative slack of m s^a s^b <= f, per index
    upper_margin: Pair  # worst relative slack of f <= M s^a s^b + |xi1|^g + |xi2|^t

    def as_text(self) -> str:
        return (
            f"envelope_samples = {self.samples}\n"
            + "".join(
                f"envelope_lower_margin{i + 1} = {self.lower_margin[i]!r}\n"
                f"envelope_upper_margin{i + 1} = {self.upper_margin[i]!r}\n"
                for i in range(2)
            )
        )


def check_envelope(spec: SystemSpec, samples: int = 2000, seed: int = 0, rtol: float = 1e-12) -> EnvelopeReport:
    """Sample the growth envelope of both nonlinearities.

    ``s1, s2`` are log-uniform on ``[1e-3, 1e3]`` and ``|xi1|, |xi2|`` uniform
    on ``[0, 100]``. Margins are relative; a margin below ``-rtol`` raises.

    Raises:
        SpecInvalidError: naming the first violating tuple.
    """
    rng = np.random.default_rng(seed)
    s1 = 10.0 ** rng.uniform(-3, 3, samples)
    s2 = 10.0 ** rng.uniform(-3, 3, samples)
    x1 = rng.uniform(0, 100, samples)
    x2 = rng.uniform(0, 100, samples)
    lows, ups = [], []
    for i in range(2):
        f = spec.f[i].evaluate(s1, s2, x1, x2)
        core = s1 ** spec.alpha[i] * s2 ** spec.beta[i]
        lower = spec.m[i] * core
        upper = spec.M[i] * core + x1 ** spec.gamma[i] + x2 ** spec.theta[i]
        lo = (f - lower) / lower
        up = (upper - f) / upper
        for name, marg in (("lower", lo), ("upper", up)):
            k = int(np.argmin(marg))
            if marg[k] < -rtol:
                tup = (float(s1[k]), float(s2[k]), float(x1[k]), float(x2[k]))
                raise SpecInvalidError(
                    f"f{i + 1} violates its {name} envelope at (s1, s2, |xi1|, |xi2|) = {tup}"
                    f" (relative margin {marg[k]:.3e})",
                    sample=tup,
                )
        lows.append(float(lo.min()))
        ups.append(float(up.min()))
    return EnvelopeReport(samples, tuple(lows), tuple(ups))


def _pair(text: str) -> Pair:
    vals = [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2:
        raise ConfigurationError(f"expected two values, got {text!r}")
    return tuple(vals)


def _extents(text: str) -> tuple[Pair, ...]:
    out = []
    for chunk in text.split(";"):
        vals = [float(v) for v in chunk.split(",") if v.strip()]
        if len(vals) != 2:
            raise ConfigurationError(f"bad interval {chunk!r} in extents")
        out.append(tuple(vals))
    return tuple(out)


def parse_spec(text: str) -> SystemSpec:
    """Parse an INI config.

    Example::

        [domain]
        N = 2
        extents = 0, 1; 0, 1

        [exponents]
        p = 2, 2
        alpha = -0.2, 0.25
        beta = 0.3, -0.15
        gamma = 0, 0
        theta = 0, 0
        r = 3, 3

        [envelope]
        m = 1, 1
        M = 1, 1

        [f1]
        expr = s1^-0.2 * s2^0.3

        [f2]
        expr = power
        grad_coef = 0.0

    A single value in a pair is used for both indices. Missing ``extents``
    default to the unit interval/square.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
        dom, ex, env = cp["domain"], cp["exponents"], cp["envelope"]
        N = dom.getint("N")
        extents = _extents(dom.get("extents", ";".join(["0, 1"] * max(N, 1))))
        f_text = (cp["f1"]["expr"], cp["f2"]["expr"])
        grad = (float(cp["f1"].get("grad_coef", "0")), float(cp["f2"].get("grad_coef", "0")))
        return SystemSpec(
            N=N,
            extents=extents,
            p=_pair(ex["p"]),
            alpha=_pair(ex["alpha"]),
            beta=_pair(ex["beta"]),
            gamma=_pair(ex.get("gamma", "0")),
            theta=_pair(ex.get("theta", "0")),
            m=_pair(env["m"]),
            M=_pair(env["M"]),
            r=_pair(ex["r"]),
            f_text=f_text,
            grad_coef=grad,
        )
    except (configparser.Error, KeyError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid spec config: {exc}") from None


def load_spec(path) -> SystemSpec:
    with open(path) as fh:
        return parse_spec(fh.read())


def dump_spec(spec: SystemSpec) -> str:
    """Serialize to the INI format; ``parse_spec(dump_spec(s)) == s``."""
    cp = configparser.ConfigParser()
    cp.optionxform = str

    def pair(v):
        return f"{float(v[0])!r}, {float(v[1])!r}"

    cp["domain"] = {"N": str(spec.N), "extents": "; ".join(pair(e) for e in spec.extents)}
    cp["exponents"] = {k: pair(getattr(spec, k)) for k in ("p", "alpha", "beta", "gamma", "theta", "r")}
    cp["envelope"] = {"m": pair(spec.m), "M": pair(spec.M)}
    for i in range(2):
        cp[f"f{i + 1}"] = {"expr": spec.f_text[i], "grad_coef": repr(spec.grad_coef[i])}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
