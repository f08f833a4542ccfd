import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gradest import calculus as dc
from gradest import elliptic as el
from gradest.geometry import build_flat_torus

from conftest import sup

TWO_PI = 2 * math.pi


def test_solve_examples(circle64, torus32):
    assert sup(el.solve_poisson_mean_zero(circle64, np.zeros(64))) == 0.0
    x = circle64.coordinates[0]
    np.testing.assert_allclose(el.solve_poisson_mean_zero(circle64, np.cos(x)), np.cos(x), atol=1e-13)
    X, Y = torus32.coordinates
    f = np.cos(X) * np.cos(Y)
    np.testing.assert_allclose(el.solve_poisson_mean_zero(torus32, f), f / 2, atol=1e-13)


def test_solve_contract_on_noise(torus64):
    from gradest.mms import band_limited_noise

    A = band_limited_noise(torus64, 5)
    A -= A.mean()
    v = el.solve_poisson_mean_zero(torus64, A)
    assert sup(dc.laplace_beltrami(torus64, v) + A) <= 1e-9 * sup(A)
    assert abs(v.mean()) <= 1e-14


def test_solve_sphere(sphere3):
    z = sphere3.vertices[:, 2]
    A = 2 * z
    v = el.solve_poisson_mean_zero(sphere3, A)
    assert sup(dc.laplace_beltrami(sphere3, v) + A) <= 1e-9
    # continuum solution is z, the cotangent discretisation is O(h^2) close
    assert sup(v - z) < 0.02


def test_solve_rejects_incompatible(circle64):
    with pytest.raises(el.CompatibilityError):
        el.solve_poisson_mean_zero(circle64, np.ones(64))


def test_solver_iteration_cap(sphere3):
    z = sphere3.vertices[:, 2]
    with pytest.raises(el.SolverError):
        el.solve_poisson_mean_zero(sphere3, z * sphere3.vertices[:, 0] + z, maxiter=1)


def test_positive_shift(circle64):
    x = circle64.coordinates[0]
    u = el.positive_shift(np.cos(x), 1.0)
    np.testing.assert_allclose(u, np.cos(x) + 2, atol=1e-15)
    assert u.min() == 1.0
    assert sup(el.positive_shift(np.zeros(64), 1.0) - 1) == 0.0
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            el.positive_shift(np.cos(x), bad)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), delta=st.floats(1e-3, 1e3))
def test_shift_preserves_laplacian(seed, delta):
    m = build_flat_torus(1, [TWO_PI], [64])
    v = np.random.default_rng(seed).normal(size=64)
    u = el.positive_shift(v, delta)
    assert u.min() == pytest.approx(delta, rel=1e-15, abs=1e-15)
    lap_v = dc.laplace_beltrami(m, v)
    # spectral round-off grows like sup|u| * N^2 * eps
    tol = 1e-13 * max(1.0, sup(lap_v)) + 1e-15 * sup(u) * 64**2
    assert sup(dc.laplace_beltrami(m, u) - lap_v) <= tol


def test_log_transform(circle64):
    assert sup(el.log_transform(np.full(8, math.e)) - 1) <= 1e-15
    assert sup(el.log_transform(np.ones(8))) == 0.0
    x = circle64.coordinates[0]
    assert el.log_transform(2 + np.cos(x))[0] == pytest.approx(math.log(3))
    with pytest.raises(ValueError):
        el.log_transform(np.array([1.0, 0.0]))


def _q_oracle(xv):
    x = sp.symbols("x")
    u = 2 + sp.cos(x)
    Q = sp.diff(sp.log(u), x) ** 2 + sp.cos(x) / u
    return float(Q.subs(x, xv))


def test_harnack_Q_examples(circle64):
    assert sup(el.harnack_Q(circle64, np.full(64, 3.0), np.zeros(64))) == 0.0
    x = circle64.coordinates[0]
    Q = el.harnack_Q(circle64, 2 + np.cos(x), np.cos(x))
    assert _q_oracle(0) == pytest.approx(1 / 3)
    assert _q_oracle(sp.pi) == pytest.approx(-1)
    assert Q[0] == pytest.approx(1 / 3, abs=1e-13)
    assert Q[32] == pytest.approx(-1, abs=1e-13)
    oracle = np.array([_q_oracle(v) for v in x[::8]])
    np.testing.assert_allclose(Q[::8], oracle, atol=1e-12)


def _mms_pair(m, u):
    return u, -dc.laplace_beltrami(m, u)


def test_q_identity_examples(circle64):
    assert sup(el.q_identity_residual(circle64, np.ones(64), np.zeros(64))) == 0.0
    x = circle64.coordinates[0]
    u, A = 2 + np.cos(x), np.cos(x)
    assert sup(el.q_identity_residual(circle64, u, A)) <= 1e-9
    m128 = build_flat_torus(1, [TWO_PI], [128])
    x2 = m128.coordinates[0]
    r128 = sup(el.q_identity_residual(m128, 2 + np.cos(x2), np.cos(x2)))
    assert r128 <= max(sup(el.q_identity_residual(circle64, u, A)), 1e-13) * 10


def test_quotient_laplacian_examples(circle64):
    assert sup(el.quotient_laplacian_residual(circle64, np.full(64, 2.0), np.zeros(64))) == 0.0
    x = circle64.coordinates[0]
    assert sup(el.quotient_laplacian_residual(circle64, 2 + np.cos(x), np.cos(x))) <= 1e-8


def test_broken_pair_raises(circle64):
    x = circle64.coordinates[0]
    for op in (el.quotient_laplacian_residual, el.q_identity_residual):
        with pytest.raises(el.PDEPreconditionError):
            op(circle64, np.ones(64), np.cos(x))


def test_identity_residuals_converge_for_non_band_limited_data():
    rq, rl = [], []
    for N in (16, 32):
        m = build_flat_torus(1, [TWO_PI], [N])
        u, A = _mms_pair(m, np.exp(np.cos(m.coordinates[0])))
        rq.append(sup(el.q_identity_residual(m, u, A)))
        rl.append(sup(el.quotient_laplacian_residual(m, u, A)))
    # at N = 16 these are far from round-off, so a spectral drop is visible
    assert rq[0] / max(rq[1], 1e-16) >= 100
    assert rl[0] / max(rl[1], 1e-16) >= 100


@pytest.mark.parametrize("K, expected", [(0.0, 2.0), (1.0, 6.0)])
def test_theorem1_rhs_constant_examples(torus32, K, expected):
    u, A = np.ones(torus32.shape), np.zeros(torus32.shape)
    assert el.theorem1_rhs(torus32, u, A, K, 0.5) == pytest.approx(expected, rel=1e-15)


def test_theorem1_rhs_brute_force(circle64):
    x = circle64.coordinates[0]
    u, A = 2 + np.cos(x), np.cos(x)
    b, n = 0.5, 1
    best = -np.inf
    # independent pointwise loop with closed-form derivatives of A
    for xi, ui in zip(x, u):
        Ai, gA2, lapA = math.cos(xi), math.sin(xi) ** 2, -math.cos(xi)
        q = Ai / ui
        br1 = b - q
        br2 = (Ai**2 + gA2 / (2 * b)) / ui**2 - (4 / n * q**2 + lapA / ui)
        best = max(best, br1, br2)
    assert el.theorem1_rhs(circle64, u, A, 0.0, b) == pytest.approx(2 * n * best, rel=1e-12)


@pytest.mark.parametrize("b", [0.0, -1.0])
def test_theorem1_rhs_rejects_b(circle64, b):
    with pytest.raises(ValueError):
        el.theorem1_rhs(circle64, np.ones(64), np.zeros(64), 0.0, b)


def test_theorem1_rhs_rejects_nonpositive_u(circle64):
    u = np.ones(64)
    u[0] = 0.0
    with pytest.raises(ValueError):
        el.theorem1_rhs(circle64, u, np.zeros(64), 0.0, 0.5)


def test_bound_holds_tolerance():
    assert el.bound_holds(0.0, 5.0)
    assert el.bound_holds(-0.9e-6, 1.0)
    assert not el.bound_holds(-2e-6, 1.0)
    assert el.bound_holds(-1.5e-6, 2.0)


def test_verify_zero_source(torus32):
    rep = el.verify_theorem1(el.EllipticScenario(torus32, np.zeros(torus32.shape), delta=1.0, b=0.5))
    assert rep.sup_Q == 0.0
    assert rep.rhs_general_b == pytest.approx(2.0)
    assert rep.holds and rep.margin == pytest.approx(2.0)


def test_verify_cosine_closed_form(circle64):
    x = circle64.coordinates[0]
    rep = el.verify_theorem1(el.EllipticScenario(circle64, np.cos(x), delta=1.0, b=0.5))
    # closed form: u = 2 + cos x
    Q = np.sin(x) ** 2 / (2 + np.cos(x)) ** 2 + np.cos(x) / (2 + np.cos(x))
    assert rep.sup_Q == pytest.approx(Q.max(), abs=1e-12)
    assert rep.holds
    assert rep.res_q <= 1e-9 and rep.res_quot <= 1e-8


def test_verify_small_product_source(torus64):
    X, Y = torus64.coordinates
    rep = el.verify_theorem1(el.EllipticScenario(torus64, 0.1 * np.cos(X) * np.cos(Y)))
    assert rep.holds and rep.margin > 0
    assert set(el.EllipticReport.CSV_COLUMNS) == set(rep.csv_row())


def test_scenario_validation(circle64):
    x = circle64.coordinates[0]
    for kw in ({"delta": 0.0}, {"b": 0.0}, {"K": -1.0}):
        with pytest.raises(ValueError):
            el.EllipticScenario(circle64, np.cos(x), **kw)
    with pytest.raises(el.CompatibilityError):
        el.EllipticScenario(circle64, 1 + np.cos(x))


@pytest.mark.parametrize("name", ["shifted-cos", "product", "exp-cos", "exp-mixed"])
def test_delta_monotone_and_b_envelope(torus64, name):
    from gradest.mms import elliptic_mms

    A = elliptic_mms(name, torus64).A
    for delta in (1.0, 2.0, 10.0):
        reps = [el.verify_theorem1(el.EllipticScenario(torus64, A, delta=delta, b=b))
                for b in (0.25, 0.5, 1.0, 2.0)]
        assert all(r.holds for r in reps)
        assert min(r.rhs_general_b for r in reps) >= reps[0].sup_Q


def test_sphere_scenario_holds(sphere3):
    X = sphere3.vertices
    A = X[:, 0] * X[:, 1]
    A -= np.dot(sphere3.areas, A) / sphere3.volume
    rep = el.verify_theorem1(el.EllipticScenario(sphere3, A))
    assert rep.holds
    assert rep.res_solver <= 1e-9
