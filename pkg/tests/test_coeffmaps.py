import pytest
from hypothesis import given, strategies as st

from polymv import ConfigError, make_model
from polymv.coeffmaps import (Method, Verdict, check_assumptions, check_pmp, check_pmp_joint,
                              check_sqrt_argument, sample_points, norm_N)
from polymv.common_noise import JointCase
from polymv.errors import TemplateMismatchError

# growth-condition example families (N = 3), constants chosen arbitrarily
A_FAMILY = dict(
    b="0.3 + 2 * abs(x1)", beta="-1", Gamma="0.5",
    c="1 + pow(abs(x1), 2, 1) + 0.5 * abs(x2) + pow(abs(x3), 2, 3) + 0.1 * exp(x1)",
    gamma="0.2 + abs(x1) + pow(abs(x2), 1, 2) + 3 * pow(abs(x3), 1, 3) + exp(x1)",
)
B_FAMILY = dict(
    b="0.3 + abs(x1) + pow(abs(x2), 1, 2) + pow(abs(x3), 1, 3)", beta="2", Gamma="-1",
    c="1 + pow(abs(x1), 2, 1) + abs(x2) + pow(abs(x3), 2, 3)",
    gamma="abs(x1) + 0.5 * pow(abs(x2), 1, 2) + pow(abs(x3), 1, 3)",
)


def test_first_family_satisfies_a():
    r = check_assumptions(make_model(3, z0=0.0, **A_FAMILY), "A")
    assert r.verdict is Verdict.VERIFIED
    assert all(e.method is Method.SYMBOLIC for e in r.entries)


def test_second_family_satisfies_b():
    assert check_assumptions(make_model(3, z0=0.0, **B_FAMILY), "B").verdict is Verdict.VERIFIED


def test_exponential_slack_is_only_allowed_under_a():
    r = check_assumptions(make_model(3, z0=0.0, **A_FAMILY), "B")
    assert r["B.c.quadratic_growth"].verdict is Verdict.FALSIFIED
    assert r["B.c.quadratic_growth"].witness.recheck()


def test_diffusion_in_second_moment_violates_both(feedback):
    for which in "AB":
        r = check_assumptions(feedback, which)
        res = r[f"{which}.gamma.linear_growth"]
        assert res.verdict is Verdict.FALSIFIED
        assert res.witness.kind == "growth" and res.witness.recheck()


def test_drift_depending_on_higher_moments_violates_a():
    r = check_assumptions(make_model(3, z0=0.0, **B_FAMILY), "A")
    assert r["A.b.growth_in_x1"].verdict is Verdict.FALSIFIED


@pytest.mark.parametrize("which", "AB")
def test_unbounded_beta_is_falsified(which):
    r = check_assumptions(make_model(2, beta="x1", z0=0.0), which)
    assert r[f"{which}.beta.bounded"].verdict is Verdict.FALSIFIED


def test_zero_maps_pass_everything():
    spec = make_model(2, z0=0.0, l="0", Lambda="0")
    for which in "ABC":
        assert check_assumptions(spec, which).verdict is Verdict.VERIFIED


def test_c_needs_common_noise_maps():
    with pytest.raises(ConfigError):
        check_assumptions(make_model(2, z0=0.0), "C")


def test_c_checks_common_maps():
    r = check_assumptions(make_model(2, z0=0.0, l="x1", Lambda="x1"), "C")
    assert r["C.l.linear_growth"].verdict is Verdict.VERIFIED
    assert r["C.Lambda.bounded"].verdict is Verdict.FALSIFIED


def test_unprovable_shape_falls_back_to_sampling():
    # cancelling leading terms defeat the axis asymptotics; sampling finds nothing
    spec = make_model(2, z0=0.0, gamma="abs(x2 + 1) - abs(x2)")
    res = check_assumptions(spec, "B")["B.gamma.linear_growth"]
    assert res.method is Method.SAMPLED and res.verdict is Verdict.UNKNOWN


def test_sampler_hits_requested_norms():
    x, r = sample_points(3, 200)
    assert norm_N(x) == pytest.approx(r, rel=1e-9)


# -- positive maximum principle ----------------------------------------------------

PMP_POSITIVE = [
    ("R", dict(c="1 + abs(x1)", Gamma="0.5")),
    ("R", dict(c="1", gamma="2", Gamma="1")),                  # (1 + z)^2
    ("R", dict(c="x1 * x1", gamma="2 * x1", Gamma="1")),       # (x1 + z)^2
    ("R+", dict(b="0.5", beta="-3", gamma="x2", Gamma="0.1")),
    ("R+", dict(b="x1", gamma="0.2")),
    ("[0,1]", dict(b="0.5", beta="-1", gamma="0.3", Gamma="-0.3")),
    ("[0,1]", dict(b="0.2", beta="-0.2", gamma="0.1 + 0.2", Gamma="-0.3")),
]
PMP_NEGATIVE = [
    ("R", dict(c="1 + abs(x1)", Gamma="-0.5")),
    ("R", dict(c="1", gamma="2.5", Gamma="1")),
    ("R+", dict(b="-0.5", beta="-3", gamma="x2", Gamma="0.1")),
    ("R+", dict(b="0.5", c="0.1", gamma="0.2")),
    ("[0,1]", dict(b="0.5", beta="-0.2", gamma="0.3", Gamma="-0.3")),
    ("[0,1]", dict(b="-0.5", beta="-1", gamma="0.3", Gamma="-0.3")),
    ("[0,1]", dict(b="0.5", beta="-1", gamma="-0.3", Gamma="0.3")),
]


@pytest.mark.parametrize("space, maps", PMP_POSITIVE)
def test_pmp_examples_verified(space, maps):
    r = check_pmp(make_model(2, z0=0.5, state_space=space, **maps))
    assert r.verdict is Verdict.VERIFIED, r.format()


@pytest.mark.parametrize("space, maps", PMP_NEGATIVE)
def test_pmp_negative_controls_falsified(space, maps):
    r = check_pmp(make_model(2, z0=0.5, state_space=space, **maps))
    assert r.verdict is Verdict.FALSIFIED, r.format()
    for e in r.entries:
        if e.verdict is Verdict.FALSIFIED:
            assert e.witness.recheck()


def test_pmp_unknown_without_proof_or_counterexample():
    spec = make_model(1, z0=0.0, c="exp(x1) + abs(x1) - 0.5")
    assert check_sqrt_argument(spec).verdict is Verdict.UNKNOWN


coef = st.floats(-3, 3, allow_nan=False).map(lambda v: round(v, 2))


@given(coef, coef, coef, coef, coef)
def test_pmp_witnesses_recheck(c0, c1, g0, g1, G0):
    spec = make_model(1, z0=0.0, c=f"{c0} + {c1} * x1", gamma=f"{g0} + {g1} * x1", Gamma=f"{G0}")
    res = check_sqrt_argument(spec)
    if res.verdict is Verdict.FALSIFIED:
        assert res.witness.recheck()
    assert not (res.method is Method.SAMPLED and res.verdict is Verdict.VERIFIED)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
def test_growth_witnesses_recheck(p, q, k):
    spec = make_model(3, z0=0.0, c=f"pow(abs(x{k}), {p}, {q})")
    res = check_assumptions(spec, "B")["B.c.quadratic_growth"]
    # |x_k|^(p/q) <= K(1 + ||x||^2) exactly when p/q <= 2/k
    if p * k <= 2 * q:
        assert res.verdict is Verdict.VERIFIED
    else:
        assert res.verdict is Verdict.FALSIFIED and res.witness.recheck()


# -- common noise ----------------------------------------------------------------------

def test_common_noise_pmp_nonneg():
    ok = make_model(2, z0=1.0, state_space="R+", b="0.2", gamma="0.1", Gamma="0.3",
                    l="0", Lambda="0.4")
    assert check_pmp(ok).verdict is Verdict.VERIFIED
    bad = make_model(2, z0=1.0, state_space="R+", b="0.2", l="0.1", Lambda="0.4")
    r = check_pmp(bad)
    assert r["l.zero"].verdict is Verdict.FALSIFIED and r["l.zero"].witness.recheck()


def test_common_noise_pmp_alternating_reading():
    ok = make_model(3, z0=1.0, b="0.2", c="abs(x2)", Gamma="0.3", l="0", Lambda="0.4")
    r = check_pmp(ok)
    assert r["gamma.zero"].verdict is Verdict.VERIFIED
    assert r["c.zero_on_boundary"].verdict is not Verdict.FALSIFIED
    bad = make_model(3, z0=1.0, c="1", l="0", Lambda="0.4")
    assert check_pmp(bad)["c.zero_on_boundary"].verdict is Verdict.FALSIFIED


def test_common_noise_on_unit_interval_is_unknown():
    spec = make_model(1, z0=0.5, state_space="[0,1]", l="0", Lambda="0.1")
    assert check_pmp(spec).verdict is Verdict.UNKNOWN


JOINT_POSITIVE = [
    (JointCase.PROP_B, dict(state_space="R+", b="0.3", gamma="0.2", Gamma="0.1", l="0", Lambda="0.4")),
    (JointCase.PROP_A, dict(state_space="R+", b="0.3", gamma="0.2", Gamma="0.1", l="0", Lambda="0.4")),
    (JointCase.PROP_B, dict(b="0.3 + 0.1 * x1", c="1 + 2 * x1 * x1", Gamma="0.1", l="0.2", Lambda="0.4")),
    (JointCase.PROP_A, dict(c="1 + 2 * x2", Gamma="0.1", gamma="0", l="0", Lambda="0.4")),
]
JOINT_NEGATIVE = [
    (JointCase.PROP_B, dict(state_space="R+", b="0.3", gamma="0.2", Gamma="-0.1", l="0", Lambda="0.4")),
    (JointCase.PROP_A, dict(state_space="R+", b="0.3", gamma="0.2", Gamma="0.1", l="0.1", Lambda="0.4")),
    (JointCase.PROP_B, dict(b="0.3", c="1 - 2 * x1 * x1", Gamma="0.1", l="0.2", Lambda="0.4")),
    (JointCase.PROP_A, dict(b="0.1", c="1 + 2 * x2", Gamma="0.1", l="0", Lambda="0.4")),
]


@pytest.mark.parametrize("case, maps", JOINT_POSITIVE)
def test_joint_pmp_examples_verified(case, maps):
    assert check_pmp_joint(make_model(2, z0=1.0, **maps), case).verdict is Verdict.VERIFIED


@pytest.mark.parametrize("case, maps", JOINT_NEGATIVE)
def test_joint_pmp_negative_controls_falsified(case, maps):
    r = check_pmp_joint(make_model(2, z0=1.0, **maps), case)
    assert r.verdict is Verdict.FALSIFIED
    assert all(e.witness.recheck() for e in r.entries if e.verdict is Verdict.FALSIFIED)


def test_joint_pmp_requires_template():
    with pytest.raises(TemplateMismatchError):
        check_pmp_joint(make_model(2, z0=1.0, b="x2", l="0", Lambda="0.1"), JointCase.PROP_B)
