"""Acceptance criteria 1-11, at their stated tolerances.

Each test carries a ``criterion(n)`` marker; the terminal summary prints one
PASS/FAIL line per criterion with the measured numbers.  Expensive particle
runs are shared through module-scoped fixtures and reused by the determinism
check, which re-runs them with a different worker count.
"""

import math
import time

import numpy as np
import pytest

from polymv import Verdict, build_L, check_assumptions, check_pmp, gronwall_bound, make_model
from polymv.coeffmaps import check_pmp_joint
from polymv.common_noise import (CommonNoisePath, JointCase, folded_spec, gbm_conditional_mean,
                                 gbm_euler_rmse_bound, simulate_conditional_moments,
                                 simulate_conditional_moments_batch, simulate_particles_common,
                                 write_conditional_csv)
from polymv.dual import integrate_backward_c, integrate_vec, martingale_gap
from polymv.magnus import (GeneratorPath, conditional_moment, magnus_omega, matrix_exp,
                           transition_backward, transition_magnus)
from polymv.mckean_sim import simulate
from polymv.momentode import integrate_moments
from polymv.ode import Status

M_BIG = 100_000
WORKERS = 8


def feedback_model():
    return make_model(2, gamma="x2", z0=1.0, state_space="R+")


def ou_model():
    return make_model(2, b="0.5", beta="-1", c="0.25", z0=1.0)


def unit_model():
    return make_model(2, b="0.5", beta="-1", c="0", gamma="0.3", Gamma="-0.3", z0=0.5,
                      state_space="[0,1]")


def gbm_model():
    # zero drift, common loading Lambda = 0.4, small idiosyncratic noise
    return make_model(2, c="0.09", z0=1.0, l="0", Lambda="0.4")


def inhomogeneous_model():
    # the generator follows the moment path, so it varies in time and does not commute
    return make_model(3, b="0.2 * x1", beta="-0.25", c="0.05 * x2", gamma="0.05 * x3",
                      Gamma="0.02", z0=0.8)


def all_models():
    return {
        "feedback": feedback_model(),
        "ou": ou_model(),
        "unit": unit_model(),
        "inhomogeneous": inhomogeneous_model(),
        "mixed": make_model(3, b="0.3 + 0.5 * abs(x1)", beta="-1", c="1 + abs(x2)",
                            gamma="0.2 * x1", Gamma="0.5", z0=0.4),
    }


def _csv_bytes(tmp_path, name, writer):
    p = tmp_path / name
    writer(p)
    return p.read_bytes()


# -- shared particle runs ---------------------------------------------------------------

@pytest.fixture(scope="module")
def feedback_run():
    spec = feedback_model()
    path = integrate_moments(spec, 1.0)
    t0 = time.perf_counter()
    run = simulate(spec, "dec", M_BIG, 1e-3, 1.0, 20240601, path, stride=100, workers=WORKERS)
    return run, path, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ou_run():
    spec = ou_model()
    path = integrate_moments(spec, 1.0)
    return simulate(spec, "dec", M_BIG, 1e-3, 1.0, 7, path, stride=100, workers=WORKERS), path


@pytest.fixture(scope="module")
def unit_run():
    return simulate(unit_model(), "int", 10_000, 1e-3, 5.0, 3, stride=500, workers=WORKERS)


@pytest.fixture(scope="module")
def common_runs():
    spec = gbm_model()
    path = CommonNoisePath.generate(11, 1e-3, 1.0)
    sde = simulate_conditional_moments(spec, path)
    parts = simulate_particles_common(spec, 10_000, 1e-3, 1.0, 5, 11, workers=WORKERS, path=path)
    return spec, path, sde, parts


# -- 1 -----------------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_c01_second_moment_feedback_closed_form(detail):
    sol = integrate_moments(feedback_model(), 2.0)
    t = np.linspace(0.0, 2.0, 2001)
    rel = np.max(np.abs(sol.z(t)[:, 1] / np.exp(t) - 1.0))
    detail(f"ODE max rel err {rel:.2e} (<= 1e-8)")
    assert sol.status is Status.COMPLETED and rel <= 1e-8


@pytest.mark.criterion(1)
def test_c01_second_moment_feedback_particles(feedback_run, detail):
    run, _, elapsed = feedback_run
    m = run.final_moments()
    z = (m.m[1] - math.e) / m.std_err[1]
    detail(f"m2_hat(1) = {m.m[1]:.5f} +- {m.std_err[1]:.5f}, {z:+.2f} SE; runtime {elapsed:.1f}s (<= 30s)")
    assert abs(z) <= 3 and elapsed <= 30


# -- 2 -----------------------------------------------------------------------------------

@pytest.mark.criterion(2)
def test_c02_constant_coefficient_consistency(detail):
    spec = make_model(5, b="0.3", beta="-0.4", c="0.2", gamma="0.1", Gamma="0.05", z0=0.7)
    L = build_L(spec, np.zeros(5))
    sol = integrate_moments(spec, 1.0)
    path = GeneratorPath.from_solution(sol)
    zbar0 = spec.zbar0
    candidates = {
        "ode": sol.zbar(1.0),
        "expm": matrix_exp(L) @ zbar0,
        "magnus1": transition_magnus(path, 0.0, 1.0, 1).P.T @ zbar0,
        "backward": transition_backward(path, 0.0, 1.0).P.T @ zbar0,
    }
    names = list(candidates)
    worst = max(np.max(np.abs(candidates[a] - candidates[b]))
                for i, a in enumerate(names) for b in names[i + 1:])
    detail(f"N=5 worst pairwise diff {worst:.2e} (<= 1e-8)")
    assert worst <= 1e-8


# -- 3 -----------------------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_c03_magnus_vs_kolmogorov(detail):
    spec = inhomogeneous_model()
    sol = integrate_moments(spec, 1.0, 1e-12, 1e-14)
    path = GeneratorPath.from_solution(sol)
    res = magnus_omega(path, 0.0, 1.0, 3)
    assert res.max_commutator >= 1e-3
    assert res.norm_integral <= 1.0
    errs = []
    for order in (1, 2, 3):
        e = 0.0
        for k in range(1, 4):
            u = np.eye(4)[k]
            for zs in (0.5, 0.8, 1.0):
                cm = conditional_moment(path, 0.0, 1.0, u, zs, "MAGNUS", order)
                ref = conditional_moment(path, 0.0, 1.0, u, zs, "BACKWARD_ODE", tol=1e-12)
                assert not cm.fallback
                e = max(e, abs(cm.value - ref.value))
        errs.append(e)
    detail(f"int||H|| = {res.norm_integral:.3f}, max commutator {res.max_commutator:.1e}, "
           f"errors by order {errs[0]:.1e} / {errs[1]:.1e} / {errs[2]:.1e} (order 3 <= 1e-6)")
    assert errs[2] <= 1e-6
    assert errs[0] >= errs[1] >= errs[2]


# -- 4 -----------------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_c04_chapman_kolmogorov(detail):
    rng = np.random.default_rng(4)
    worst = 0.0
    for spec in (ou_model(), inhomogeneous_model()):
        path = GeneratorPath.from_solution(integrate_moments(spec, 1.0))
        for _ in range(20):
            s, t, u = np.sort(rng.uniform(0.0, 1.0, 3))
            P = lambda a, b: transition_backward(path, a, b, tol=1e-10).P  # noqa: E731
            worst = max(worst, np.max(np.abs(P(s, u) - P(s, t) @ P(t, u))))
    detail(f"max ||P_su - P_st P_tu||_inf {worst:.2e} over 40 triples (<= 1e-8)")
    assert worst <= 1e-8


# -- 5 -----------------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_c05_primal_dual(detail):
    worst_vec = worst_drift = 0.0
    for spec in all_models().values():
        vec = integrate_vec(spec, 1.0)
        sol = integrate_moments(spec, 1.0, 1e-10, 1e-10)
        t = np.linspace(0.0, 1.0, 101)
        worst_vec = max(worst_vec, np.max(np.abs(vec(t) - sol.zbar(t))))
        back = integrate_backward_c(spec, vec, 1.0)
        for u in np.eye(spec.N + 1)[1:]:
            vals = np.array([vec(ti) @ back.c(ti, u) for ti in t])
            worst_drift = max(worst_drift, np.ptp(vals))
    detail(f"||vec - zbar|| {worst_vec:.1e} (<= 1e-10), duality drift {worst_drift:.1e} (<= 1e-6)")
    assert worst_vec <= 1e-10 and worst_drift <= 1e-6


# -- 6 -----------------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_c06_dual_martingale(feedback_run, ou_run, detail):
    parts = []
    ok = True
    for name, (run, path) in (("feedback", feedback_run[:2]), ("ou", ou_run)):
        spec = run.spec
        back = integrate_backward_c(spec, integrate_vec(spec, 1.0), 1.0)
        for k in (1, 2):
            u = np.eye(spec.N + 1)[k]
            g = martingale_gap(spec, back, u, run)
            parts.append(f"{name} e{k} {g.gap / g.std_error:.2f}")
            ok &= g.gap <= 3 * g.std_error
    detail("gap/SE: " + ", ".join(parts) + " (<= 3)")
    assert ok


# -- 7 -----------------------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_c07_gronwall_invariant(detail):
    specs = [ou_model(), all_models()["mixed"],
             make_model(2, b="0.2 - 0.5 * abs(x1)", beta="0.3", c="0.5", z0=-1.0),
             make_model(3, b="-0.3 + 2 * abs(x1)", beta="-1", Gamma="0.5",
                        c="1 + pow(abs(x1), 2, 1) + 0.5 * abs(x2) + 0.1 * exp(x1)", z0=0.2)]
    worst = -math.inf
    checked = 0
    for spec in specs:
        if check_assumptions(spec, "A").verdict is not Verdict.VERIFIED:
            continue
        sol = integrate_moments(spec, 1.0)
        t = np.linspace(0.0, 1.0, 1001)
        z1 = np.concatenate([sol.values[:, 1], sol.z(t)[:, 0]])
        tt = np.concatenate([sol.t, t])
        worst = max(worst, float(np.max(np.abs(z1) - gronwall_bound(spec, tt))))
        checked += 1
    detail(f"{checked} models, max(|z1| - bound) {worst:.3g} (<= 1e-8)")
    assert checked == len(specs) and worst <= 1e-8


# -- 8 -----------------------------------------------------------------------------------

@pytest.mark.criterion(8)
def test_c08_unit_interval_confinement(unit_run, detail):
    run = unit_run
    assert check_pmp(run.spec).verdict is Verdict.VERIFIED
    inside = bool(np.all((run.states >= 0.0) & (run.states <= 1.0)))
    detail(f"all in [0,1]: {inside}, projection rate {run.projection_rate:.2e} (<= 1e-2), "
           f"max overshoot {run.max_overshoot:.1e}")
    assert inside and run.projection_rate <= 0.01


# -- 9 -----------------------------------------------------------------------------------

@pytest.mark.criterion(9)
def test_c09_common_noise_pathwise(common_runs, detail):
    spec, path, sde, _ = common_runs
    exact = gbm_conditional_mean(1.0, 0.4, path)
    rmse = float(np.sqrt(np.mean((sde.m[:, 0] - exact) ** 2)))
    bound = gbm_euler_rmse_bound(1.0, 0.4, 1.0, 1e-3)
    detail(f"SDE m1 vs exp martingale RMSE {rmse:.2e} (<= {3 * bound:.2e})")
    assert rmse <= 3 * bound


@pytest.mark.criterion(9)
def test_c09_common_noise_particles(common_runs, detail):
    _, path, sde, parts = common_runs
    m_part = parts.run.moments[:, 0]
    rmse = float(np.sqrt(np.mean((m_part - sde.m[:, 0]) ** 2)))
    at_one = abs(m_part[-1] - sde.m[-1, 0])
    detail(f"particle vs SDE m1 RMSE {rmse:.3f}, |diff| at t=1 {at_one:.3f} (<= 0.05)")
    assert rmse <= 0.05 and at_one <= 0.05


@pytest.mark.criterion(9)
def test_c09_common_noise_average(detail):
    spec = gbm_model()
    t = CommonNoisePath.generate(0, 1e-3, 1.0).t
    inc = np.stack([CommonNoisePath.generate(1000 + s, 1e-3, 1.0).increments for s in range(1000)],
                   axis=1)
    m = simulate_conditional_moments_batch(spec, t, inc).m[-1]          # (paths, N)
    target = integrate_moments(folded_spec(spec), 1.0).z(1.0)
    se = m.std(axis=0, ddof=1) / math.sqrt(m.shape[0])
    z = (m.mean(axis=0) - target) / se
    detail("path average vs unconditional, in pooled SE: " + ", ".join(f"m{k + 1} {v:+.2f}"
                                                                       for k, v in enumerate(z)))
    assert np.all(np.abs(z) <= 3)


# -- 10 ----------------------------------------------------------------------------------

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
PMP_EXAMPLES = [
    ("R", dict(c="1 + abs(x1)", Gamma="0.5"), dict(Gamma="-0.5")),
    ("R+", dict(b="0.5", beta="-3", gamma="x2", Gamma="0.1"), dict(b="-0.5")),
    ("R+", dict(b="0.5", beta="-3", gamma="x2", Gamma="0.1"), dict(c="0.2")),
    ("[0,1]", dict(b="0.5", beta="-1", gamma="0.3", Gamma="-0.3"), dict(beta="-0.2")),
    ("[0,1]", dict(b="0.5", beta="-1", gamma="0.3", Gamma="-0.3"), dict(gamma="-0.3", Gamma="0.3")),
]
JOINT_EXAMPLES = [
    (JointCase.PROP_B, dict(state_space="R+", b="0.3", gamma="0.2", Gamma="0.1", l="0", Lambda="0.4"),
     dict(Gamma="-0.1")),
    (JointCase.PROP_A, dict(state_space="R+", b="0.3", gamma="0.2", Gamma="0.1", l="0", Lambda="0.4"),
     dict(l="0.1")),
    (JointCase.PROP_B, dict(b="0.3", c="1 + 2 * x1 * x1", Gamma="0.1", l="0.2", Lambda="0.4"),
     dict(c="1 - 2 * x1 * x1")),
    (JointCase.PROP_A, dict(c="1 + 2 * x2", Gamma="0.1", l="0", Lambda="0.4"), dict(b="0.1")),
]


@pytest.mark.criterion(10)
def test_c10_validators(detail):
    ok = check_assumptions(make_model(3, z0=0.0, **A_FAMILY), "A").verdict is Verdict.VERIFIED
    ok &= check_assumptions(make_model(3, z0=0.0, **B_FAMILY), "B").verdict is Verdict.VERIFIED
    for which in "AB":
        r = check_assumptions(feedback_model(), which)
        res = r[f"{which}.gamma.linear_growth"]
        ok &= r.verdict is Verdict.FALSIFIED and res.witness is not None and res.witness.recheck()
    n_pos = n_neg = 0
    for space, maps, flip in PMP_EXAMPLES:
        ok &= check_pmp(make_model(2, z0=0.5, state_space=space, **maps)).verdict is Verdict.VERIFIED
        bad = check_pmp(make_model(2, z0=0.5, state_space=space, **{**maps, **flip}))
        ok &= bad.verdict is Verdict.FALSIFIED
        ok &= all(e.witness.recheck() for e in bad.entries if e.verdict is Verdict.FALSIFIED)
        n_pos += 1
        n_neg += 1
    for case, maps, flip in JOINT_EXAMPLES:
        ok &= check_pmp_joint(make_model(2, z0=1.0, **maps), case).verdict is Verdict.VERIFIED
        bad = check_pmp_joint(make_model(2, z0=1.0, **{**maps, **flip}), case)
        ok &= bad.verdict is Verdict.FALSIFIED
        ok &= all(e.witness.recheck() for e in bad.entries if e.verdict is Verdict.FALSIFIED)
        n_pos += 1
        n_neg += 1
    detail(f"families A/B verified, feedback model falsified for A and B, "
           f"{n_pos} PMP examples verified, {n_neg} negative controls falsified with witnesses")
    assert ok


# -- 11 ----------------------------------------------------------------------------------

@pytest.mark.criterion(11)
def test_c11_worker_count_determinism(feedback_run, ou_run, unit_run, common_runs, tmp_path, detail):
    pairs = []
    run, path, _ = feedback_run
    again = simulate(run.spec, "dec", M_BIG, 1e-3, 1.0, run.seed, path, stride=100, workers=1)
    pairs.append(("feedback", run.to_csv, again.to_csv))
    run, path = ou_run
    again = simulate(run.spec, "dec", M_BIG, 1e-3, 1.0, run.seed, path, stride=100, workers=1)
    pairs.append(("ou", run.to_csv, again.to_csv))
    again = simulate(unit_run.spec, "int", 10_000, 1e-3, 5.0, unit_run.seed, stride=500, workers=1)
    pairs.append(("unit", unit_run.to_csv, again.to_csv))
    spec, cpath, sde, parts = common_runs
    again = simulate_particles_common(spec, 10_000, 1e-3, 1.0, 5, 11, workers=1, path=cpath)

    def writer(run):
        return lambda p: write_conditional_csv(p, run.times, run.moments, "PARTICLE")
    pairs.append(("common", writer(parts.run), writer(again.run)))
    sde2 = simulate_conditional_moments(spec, CommonNoisePath.generate(11, 1e-3, 1.0))
    pairs.append(("sde", sde.to_csv, sde2.to_csv))
    same = {name: _csv_bytes(tmp_path, f"{name}_8.csv", a) == _csv_bytes(tmp_path, f"{name}_1.csv", b)
            for name, a, b in pairs}
    detail("identical CSVs (8 vs 1 workers): " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert all(same.values())
