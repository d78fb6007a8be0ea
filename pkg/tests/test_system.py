from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from plapsys.errors import ConfigurationError, DomainError, SpecInvalidError
from plapsys.system import (
    SystemSpec,
    check_envelope,
    dump_spec,
    eval_f,
    load_spec,
    parse_rule,
    parse_spec,
    validate_cdt,
)


def make_spec(**kw) -> SystemSpec:
    base = dict(
        N=2,
        extents=((0.0, 1.0), (0.0, 1.0)),
        p=(2.0, 2.0),
        alpha=(-0.2, 0.1),
        beta=(0.3, 0.1),
        gamma=(0.25, 0.25),
        theta=(0.25, 0.25),
        m=(1.0, 1.0),
        M=(1.0, 1.0),
        r=(3.0, 3.0),
        f_text=("power", "power"),
        grad_coef=(1.0, 1.0),
    )
    base.update(kw)
    return SystemSpec(**base)


def test_cdt_example_passes():
    rep = validate_cdt(make_spec())
    assert rep.admissible and rep.consequence_holds


def test_cdt_gradient_growth_fails():
    rep = validate_cdt(make_spec(gamma=(0.4, 0.25)))
    assert not rep.admissible
    c = rep.get("grad_growth", 1)
    assert not c.passed
    assert c.margin == pytest.approx(1 / 3 - 0.4)


def test_cdt_r_not_above_N():
    rep = validate_cdt(make_spec(r=(2.0, 3.0)))
    assert not rep.get("r_gt_N", 1).passed and rep.get("r_gt_N", 2).passed


def test_cdt_closed_left_end():
    # alpha + beta = -1/r exactly is allowed
    rep = validate_cdt(make_spec(alpha=(-1 / 3, 0.1), beta=(0.0, 0.1)))
    assert rep.get("s_lower", 1).passed


def test_eval_f_examples(competitive_spec):
    spec = make_spec(f_text=("s1^-0.2 * s2^0.3", "power"))
    assert eval_f(spec, 1, None, 1.0, 1.0, 0.0, 0.0) == pytest.approx(1.0)
    spec = make_spec(f_text=("s1^-0.2 * s2^0.3 + |xi1|^0.25", "power"))
    assert eval_f(spec, 1, None, 1.0, 1.0, 16.0, 0.0) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        eval_f(spec, 1, None, 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(ConfigurationError):
        eval_f(spec, 3, None, 1.0, 1.0, 0.0, 0.0)


def test_parse_rule_normal_form():
    rule = parse_rule("2*(s1 + s2^2)*(1 + |xi1|^0.5)")
    assert len(rule.terms) == 4
    assert rule.evaluate(1.0, 2.0, 4.0, 0.0) == pytest.approx(2 * (1 + 4) * 3)
    with pytest.raises(ConfigurationError):
        parse_rule("s1*|xi1|")


@pytest.mark.parametrize(
    "text",
    ["s1 - s2", "foo", "s1^s2", "(s1 + s2)^2", "xi1", "0*s1", "s1 +", "exp(s1)"],
)
def test_parse_rule_rejects(text):
    with pytest.raises(ConfigurationError):
        parse_rule(text)


def test_envelope_tight_cases():
    exact = make_spec(f_text=("s1^-0.2*s2^0.3", "s1^0.1*s2^0.1"), gamma=(0, 0), theta=(0, 0))
    rep = check_envelope(exact)
    assert rep.lower_margin[0] == pytest.approx(0.0, abs=1e-12)
    assert rep.upper_margin[0] > 0
    top = make_spec(f_text=("s1^-0.2*s2^0.3 + |xi1|^0.25 + |xi2|^0.25", "power"))
    assert check_envelope(top).upper_margin[0] == pytest.approx(0.0, abs=1e-12)


def test_envelope_violation_names_sample():
    bad = make_spec(f_text=("2*s1^-0.2*s2^0.3", "power"))
    with pytest.raises(SpecInvalidError) as info:
        check_envelope(bad)
    assert info.value.sample is not None and len(info.value.sample) == 4


def test_roundtrip(competitive_spec, tmp_path):
    for spec in (competitive_spec, make_spec(), make_spec(f_text=("s1^-0.2*s2^0.3 + |xi1|^0.1", "1 + s2"))):
        assert parse_spec(dump_spec(spec)) == spec
    path = tmp_path / "s.ini"
    path.write_text(dump_spec(competitive_spec))
    assert load_spec(path) == competitive_spec


def test_parse_spec_defaults(competitive_spec):
    assert competitive_spec.extents == ((0.0, 1.0), (0.0, 1.0))
    assert competitive_spec.s == pytest.approx((0.1, 0.1))
    with pytest.raises(ConfigurationError):
        parse_spec("[domain]\nN = 2\n")


def test_with_params_regenerates_power_rule(competitive_spec):
    spec = competitive_spec.with_params(alpha1=-0.1, grad_coef1=0.5, gamma1=0.2)
    assert spec.alpha[0] == -0.1
    assert spec.f[0].evaluate(1.0, 1.0, 16.0, 0.0) == pytest.approx(1.0 + 0.5 * 16**0.2 + 0.5)
    with pytest.raises(ConfigurationError):
        competitive_spec.with_params(zeta1=1.0)


admissible_exps = st.tuples(
    st.sampled_from([1.5, 2.0, 3.0, 4.0]),
    st.sampled_from([1.5, 2.0, 3.0, 4.0]),
    st.floats(2.5, 10.0),
    st.floats(2.5, 10.0),
    st.floats(0, 0.999),
    st.floats(0, 0.999),
    st.floats(0, 0.999),
    st.floats(0, 0.999),
)


@settings(max_examples=200, deadline=None)
@given(admissible_exps, st.sampled_from([1, 2]))
def test_cdt_implies_exponent_consequence(vals, N):
    p1, p2, r1, r2, a, b, c, d = vals
    # the consequence needs r_i > N >= p_i/p_j
    assume(N >= max(p1 / p2, p2 / p1))
    t1, t2 = (p1 - 1) / r1, (p2 - 1) / r2
    spec = make_spec(
        N=N,
        extents=((0.0, 1.0),) * N,
        p=(p1, p2),
        r=(r1, r2),
        alpha=(a * t1 * 0.5, a * t2 * 0.5),
        beta=(0.0, 0.0),
        gamma=(b * t1, c * t2),
        theta=(c * t1, d * t2),
    )
    rep = validate_cdt(spec)
    assume(rep.admissible)
    assert rep.consequence_holds


@settings(max_examples=100, deadline=None)
@given(
    g=st.floats(0, 0.6),
    shrink=st.floats(0, 1),
    s=st.floats(-0.3, 0.3),
    s_shrink=st.floats(0, 1),
)
def test_cdt_monotone_in_margins(g, shrink, s, s_shrink):
    before = validate_cdt(make_spec(gamma=(g, 0.1), alpha=(s, 0.1), beta=(0.0, 0.1)))
    after = validate_cdt(make_spec(gamma=(g * shrink, 0.1), alpha=(s * s_shrink, 0.1), beta=(0.0, 0.1)))
    if before.admissible:
        assert after.admissible


@settings(max_examples=100, deadline=None)
@given(
    st.floats(1e-2, 1e2),
    st.floats(1e-2, 1e2),
    st.floats(1e-2, 50),
    st.floats(1e-2, 50),
)
def test_eval_f_continuous(s1, s2, x1, x2):
    spec = make_spec()
    h = 1e-7
    base = eval_f(spec, 1, None, s1, s2, x1, x2)
    moved = eval_f(spec, 1, None, s1 * (1 + h), s2 * (1 + h), x1 + h, x2 + h)
    assert base > 0
    assert abs(moved - base) <= 1e-4 * (abs(base) + 1)


@settings(max_examples=50, deadline=None)
@given(
    alpha=st.floats(-0.5, 0.5),
    beta=st.floats(-0.5, 0.5),
    m=st.floats(0.1, 3),
    gamma=st.floats(0, 0.3),
)
def test_power_rule_respects_envelope(alpha, beta, m, gamma):
    spec = make_spec(alpha=(alpha, 0.1), beta=(beta, 0.1), m=(m, 1.0), M=(m, 1.0), gamma=(gamma, 0.25))
    rep = check_envelope(spec, samples=300, seed=1)
    assert min(rep.lower_margin) >= -1e-12 and min(rep.upper_margin) >= -1e-12


def test_threshold_flip_is_exact():
    thr = 1 / 3
    assert validate_cdt(make_spec(gamma=(np.nextafter(thr, 0), 0.25))).admissible
    assert not validate_cdt(make_spec(gamma=(thr, 0.25))).admissible
