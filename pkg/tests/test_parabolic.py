import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gradest import calculus as dc
from gradest import parabolic as pa
from gradest.elliptic import PDEPreconditionError
from gradest.geometry import build_flat_torus, integrate
from gradest.mms import band_limited_noise, parabolic_mms

from conftest import sup

TWO_PI = 2 * math.pi


def _run(m, u0, src, **kw):
    return pa.run_heat(pa.HeatRunConfig(m, u0, src, **kw))


def test_step_constant_is_stationary(circle64):
    src = pa.SpaceTimeSource.zero(circle64)
    u = np.full(64, 1.7)
    for j in range(5):
        u = pa.step_heat(circle64, u, j * 0.1, 0.1, src)
    assert sup(u - 1.7) <= 1e-14


def test_step_matches_semigroup(circle64):
    x = circle64.coordinates[0]
    src = pa.SpaceTimeSource.zero(circle64)
    u = 2 + np.cos(x)
    stepper = pa.HeatStepper(circle64, 1e-3)
    for j in range(1000):
        prev = u
        u = stepper(u, j * 1e-3, src)
        if j == 0:
            assert sup(u - (2 + math.exp(-1e-3) * np.cos(x))) <= 1e-10
    assert sup(u - (2 + math.exp(-1) * np.cos(x))) <= 1e-9
    assert prev is not u


def test_step_tracks_forced_mms(circle64):
    sol = parabolic_mms("decay", circle64)
    run = _run(circle64, sol.u(0.0), sol.source, exact=sol.u, stride=100)
    assert sup(run.final_u - sol.u(1.0)) <= 1e-6
    assert run.summary["max_reference_error"] <= 1e-6


def test_step_positivity_error(circle64):
    src = pa.SpaceTimeSource(
        circle64, value=lambda t: np.full(64, -2.0), time_derivative=lambda t: np.zeros(64),
        kind="sampled",
    )
    with pytest.raises(pa.PositivityError) as info:
        pa.step_heat(circle64, np.full(64, 1.0), 0.0, 1.0, src)
    assert info.value.t == 1.0


def test_step_rejects_bad_dt(circle64):
    with pytest.raises(ValueError):
        pa.HeatStepper(circle64, 0.0)


def _F_oracle():
    x, t = sp.symbols("x t")
    u = 2 + sp.exp(-2 * t) * sp.cos(x)
    A = sp.diff(u, t) - sp.diff(u, x, 2)
    w = sp.log(u)
    F = t * (sp.diff(w, x) ** 2 + 2 * A / u - 2 * sp.diff(w, t))
    return float(F.subs({x: 0, t: 1}))


def test_harnack_F_examples(circle64):
    src_zero = np.zeros(64)
    assert sup(pa.harnack_F(circle64, np.full(64, 3.0), src_zero, src_zero, 2.0, 0.7)) == 0.0
    x = circle64.coordinates[0]
    rng = np.random.default_rng(1)
    assert sup(pa.harnack_F(circle64, 2 + np.cos(x), rng.normal(size=64), rng.normal(size=64), 3.0, 0.0)) == 0.0
    e = math.exp(-2)
    u, A = 2 + e * np.cos(x), -e * np.cos(x)
    w_t = -2 * e * np.cos(x) / u
    F = pa.harnack_F(circle64, u, w_t, A, 2.0, 1.0)
    assert _F_oracle() == pytest.approx(2 * e / (2 + e), rel=1e-14)
    assert F[0] == pytest.approx(2 * e / (2 + e), rel=1e-12)


@pytest.mark.parametrize("a, t", [(1.0, 1.0), (0.5, 1.0), (2.0, -0.1)])
def test_harnack_F_rejects(circle64, a, t):
    with pytest.raises(ValueError):
        pa.harnack_F(circle64, np.ones(64), np.zeros(64), np.zeros(64), a, t)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), a1=st.floats(1.01, 10), a2=st.floats(1.01, 10), t=st.floats(0, 5))
def test_F_affine_in_a(seed, a1, a2, t):
    m = build_flat_torus(1, [TWO_PI], [32])
    u = 1.5 + band_limited_noise(m, seed)
    w_t = dc.laplace_beltrami(m, u) / u
    A = np.zeros(32)
    diff = pa.harnack_F(m, u, w_t, A, a2, t) - pa.harnack_F(m, u, w_t, A, a1, t)
    expected = (a2 - a1) * t * (A / u - w_t)
    assert sup(diff - expected) <= 1e-12 * max(1.0, sup(expected))


def test_w_heat_examples(torus64):
    z = np.zeros(torus64.shape)
    assert sup(pa.w_heat_residual(torus64, np.full(torus64.shape, 2.0), z, z)) == 0.0
    m = build_flat_torus(1, [TWO_PI], [64])
    sol = parabolic_mms("decay", m)
    t = 0.5
    assert sup(pa.w_heat_residual(m, sol.u(t), sol.u_t(t), sol.A(t))) <= 1e-9


def _window_residual(check, name, dt, N=64, t=0.5):
    m = build_flat_torus(1, [TWO_PI], [N])
    sol = parabolic_mms(name, m)
    win = sol.window(t, dt)
    u, A, A_t = win.U(0), win.S(0), sol.source.A_t(t)
    if check == "w":
        return sup(pa.w_heat_residual(m, u, win.ut(0), A))
    if check == "wt":
        return sup(pa.wt_evolution_residual(m, win))
    if check == "quot_evo":
        return sup(pa.quotient_evolution_residual(m, u, win.ut(0), A, A_t))
    if check == "quot_dt":
        return sup(pa.quotient_time_derivative_residual(u, win.ut(0), A, A_t, win.quotient_dt()))
    return sup(pa.F_evolution_residual(m, win, 2.0))


@pytest.mark.parametrize(
    "check, limit",
    [("w", 1e-5), ("wt", 1e-4), ("quot_evo", 1e-4), ("quot_dt", 1e-6), ("F", 1e-3)],
)
def test_fd_residuals_at_default_step(check, limit):
    assert _window_residual(check, "decay", 1e-3) <= limit


@pytest.mark.parametrize("check", ["w", "wt", "quot_evo", "quot_dt", "F"])
def test_fd_residuals_second_order(check):
    r1 = _window_residual(check, "decay", 1e-3)
    r2 = _window_residual(check, "decay", 5e-4, N=128 if check == "F" else 64)
    assert r1 / r2 >= 3.5


def test_exact_derivative_residuals(circle64):
    sol = parabolic_mms("driven", circle64)
    t = 0.5
    u, u_t, A, A_t = sol.u(t), sol.u_t(t), sol.A(t), sol.source.A_t(t)
    assert sup(pa.quotient_evolution_residual(circle64, u, u_t, A, A_t)) <= 1e-8
    dq = sol.quotient_dt_complex_step(t)
    assert sup(pa.quotient_time_derivative_residual(u, u_t, A, A_t, dq)) <= 1e-12


def test_constant_windows_vanish(circle64):
    win = pa.TimeWindow(0.5, 1e-3, np.full((5, 64), 2.0), np.zeros((5, 64)))
    assert sup(pa.wt_evolution_residual(circle64, win)) == 0.0
    assert sup(pa.F_evolution_residual(circle64, win, 2.0)) == 0.0
    const = np.full(64, 3.0)
    assert sup(pa.quotient_time_derivative_residual(const, 0 * const, const, 0 * const, 0 * const)) == 0.0


def test_window_needs_five_snapshots():
    with pytest.raises(ValueError):
        pa.TimeWindow(0.5, 1e-3, np.ones((3, 8)), np.zeros((3, 8)))


def test_quotient_evolution_precondition(circle64):
    x = circle64.coordinates[0]
    z = np.zeros(64)
    with pytest.raises(PDEPreconditionError):
        pa.quotient_evolution_residual(circle64, 2 + np.cos(x), z, z, z)


def test_F_evolution_capabilities(circle64, sphere3):
    win = pa.TimeWindow(0.0, 1e-3, np.full((5, 64), 2.0), np.zeros((5, 64)))
    with pytest.raises(ValueError):
        pa.F_evolution_residual(circle64, win, 2.0)
    swin = pa.TimeWindow(0.5, 1e-3, np.full((5, sphere3.node_count), 2.0), np.zeros((5, sphere3.node_count)))
    with pytest.raises(dc.CapabilityError):
        pa.F_evolution_residual(sphere3, swin, 2.0)


def test_diagnostics_constant_not_applicable(circle64):
    u, z = np.full(64, 2.0), np.zeros(64)
    assert pa.max_point_diagnostics(circle64, u, z, z, (z,), 2.0, 0.0, 0.5, 0) is None


def test_diagnostics_source_free_young_margin(circle64):
    x = circle64.coordinates[0]
    u = 2 + math.exp(-0.5) * np.cos(x)
    w_t = dc.laplace_beltrami(circle64, u) / u
    z0 = np.zeros(64)
    F = pa.harnack_F(circle64, u, w_t, z0, 2.0, 0.5)
    k = int(np.argmax(F))
    d = pa.max_point_diagnostics(circle64, u, w_t, z0, (z0,), 2.0, 0.0, 0.5, k)
    gw2 = dc.gradient_norm_sq(circle64, np.log(u))
    assert d.young == pytest.approx(0.5 * gw2[k] / u[k], abs=1e-14)
    assert d.young >= 0


def test_li_yau_margin_constant():
    for n in (1, 2, 3):
        assert pa.li_yau_classical_margin(0.0, 2.0, n) == n * 2.0


def test_run_constant(circle64):
    run = _run(circle64, np.full(64, 2.0), pa.SpaceTimeSource.zero(circle64), T=0.1, dt=0.01, stride=2)
    assert all(r.sup_F == 0.0 for r in run.records)
    assert all(r.liyau_margin == 0.5 * 4.0 for r in run.records)
    assert "case_split" not in run.summary


def test_run_cosine_li_yau(circle64):
    x = circle64.coordinates[0]
    run = _run(circle64, 2 + np.cos(x), pa.SpaceTimeSource.zero(circle64))
    assert run.records[0].t == 0.0 and run.records[0].sup_F == 0.0
    assert all(np.isfinite(r.sup_F) for r in run.records)
    assert min(r.liyau_margin for r in run.records) >= -1e-6
    assert run.summary["mass_balance_error"] <= 1e-12
    assert [r.t for r in run.records] == sorted(r.t for r in run.records)


def test_run_first_record_scales_with_dt(circle64):
    sol = parabolic_mms("driven", circle64)
    firsts = []
    for dt in (2e-3, 1e-3):
        run = _run(circle64, sol.u(0.0), sol.source, T=0.02, dt=dt, stride=1)
        firsts.append(run.records[1].sup_F / dt)
    # sup_F(dt) <= C dt with a dt-independent C
    assert firsts[1] <= 1.1 * firsts[0] + 1e-12
    assert np.isfinite(firsts).all()


@pytest.mark.parametrize("name", ["decay", "driven", "exp-decay"])
def test_run_forced_margins(circle64, name):
    sol = parabolic_mms(name, circle64)
    run = _run(circle64, sol.u(0.0), sol.source, exact=sol.u)
    tol = lambda r: -1e-6 * r.margin_scale
    for r in run.records:
        if not math.isnan(r.young_margin):
            assert r.young_margin >= tol(r)
            assert r.trace_margin >= tol(r)
        assert r.min_u > 0
    top = max(run.records, key=lambda r: r.sup_F)
    assert top.key1_margin >= tol(top)
    assert run.summary["mass_balance_error"] <= 1e-8
    assert run.summary["max_reference_error"] <= 1e-6
    assert set(run.summary["structural_constants"]) >= {"inv_min_u", "sup_abs_A"}
    assert all(math.isnan(r.liyau_margin) for r in run.records)


def test_run_sphere(sphere3):
    sol = parabolic_mms("sph-decay", sphere3)
    run = _run(sphere3, sol.u(0.0), sol.source, T=0.2, dt=0.01, stride=5)
    assert all(np.isfinite(r.sup_F) for r in run.records)
    assert all(math.isnan(r.res_F_evo) for r in run.records)
    assert run.summary["capabilities"]["hessian_residuals"] is False
    assert run.summary["mass_balance_error"] <= 1e-8


@pytest.mark.parametrize(
    "kw",
    [{"a": 1.0}, {"dt": 0.0}, {"T": 1e-4}, {"K": -1.0}, {"stride": 0}],
)
def test_run_config_validation(circle64, kw):
    with pytest.raises(ValueError):
        pa.HeatRunConfig(circle64, np.ones(64), pa.SpaceTimeSource.zero(circle64), **kw)


def test_run_config_rejects_nonpositive_u0(circle64):
    with pytest.raises(ValueError):
        pa.HeatRunConfig(circle64, np.zeros(64), pa.SpaceTimeSource.zero(circle64))


def test_mass_balance_forced(torus32):
    X, Y = torus32.coordinates
    src = pa.SpaceTimeSource(
        torus32, value=lambda t: 0.3 * math.cos(t) * np.ones(torus32.shape),
        time_derivative=lambda t: -0.3 * math.sin(t) * np.ones(torus32.shape), kind="sampled",
    )
    run = _run(torus32, 2 + np.cos(X) * np.sin(Y), src, T=0.5, dt=1e-2, stride=10)
    assert run.summary["mass_balance_error"] <= 1e-8
    u_mean = integrate(torus32, run.final_u) / torus32.volume
    # the mean obeys d/dt mean = 0.3 cos t exactly
    assert u_mean == pytest.approx(2 + 0.3 * math.sin(0.5), rel=1e-5)
