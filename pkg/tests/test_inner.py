import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfomqp.inner import (
    InnerFailure,
    InnerState,
    InnerStopPolicy,
    Momentum,
    MomentumKind,
    StopMode,
    default_momentum,
    fixed_count,
    fom_step,
    gradient_map_norm,
    iteration_cap,
    solve_inner,
    theta_next,
)

BOX = (np.full(1, -10.0), np.full(1, 10.0))


def quad(Q, q):
    Q, q = np.atleast_2d(np.asarray(Q, float)), np.asarray(q, float)
    return lambda x: Q @ x + q


class TestStep:
    def test_gm_exact_step(self):
        # phi(u) = u^2 - 2u, L = 2
        state = InnerState.start(np.zeros(1), L=2.0)
        fom_step(state, Momentum(MomentumKind.GM), quad([[2.0]], [-2.0]), *BOX)
        assert state.x[0] == 1.0

    def test_theta_sequence(self):
        t2 = theta_next(1.0)
        t3 = theta_next(t2)
        assert t2 == pytest.approx(1.61803, abs=1e-5)
        assert t3 == pytest.approx(2.19353, abs=1e-5)
        assert (t2 - 1) / t3 == pytest.approx(0.281754, abs=1e-6)

    def test_fgm_betas(self):
        m = Momentum(MomentumKind.FGM)
        assert m.next_beta() == 0.0
        assert m.next_beta() == pytest.approx(0.281754, abs=1e-6)

    def test_fgm_sigma_constant(self):
        m = Momentum(MomentumKind.FGM_SIGMA, L=100.0, sigma=1.0)
        assert m.next_beta() == pytest.approx(9 / 11) == m.next_beta()

    def test_fgm_sigma_needs_sigma(self):
        with pytest.raises(ValueError):
            Momentum(MomentumKind.FGM_SIGMA, L=1.0, sigma=0.0)

    def test_nonfinite_gradient(self):
        state = InnerState.start(np.zeros(1), L=1.0)
        with pytest.raises(InnerFailure):
            fom_step(state, Momentum(MomentumKind.GM), lambda x: np.array([np.nan]), *BOX)

    def test_bad_lipschitz(self):
        with pytest.raises(ValueError):
            fom_step(InnerState.start(np.zeros(1), L=0.0), Momentum(MomentumKind.GM), quad([[1.0]], [0.0]), *BOX)


class TestGradientMap:
    def test_zero_at_interior_minimizer(self):
        assert gradient_map_norm(np.array([1.0]), quad([[1.0]], [-1.0]), 1.0, *BOX) == 0.0

    def test_unconstrained_is_gradient_norm(self):
        g = quad(np.eye(2), [3.0, 4.0])
        inf = np.full(2, np.inf)
        assert gradient_map_norm(np.zeros(2), g, 2.0, -inf, inf) == pytest.approx(5.0)

    def test_clamped_by_box(self):
        assert gradient_map_norm(np.array([1.0]), quad([[1.0]], [0.0]), 1.0, np.ones(1), 2 * np.ones(1)) == 0.0


class TestSolveInner:
    def test_scalar_quadratic_gm(self):
        stop = InnerStopPolicy(StopMode.GRADIENT_MAP, 1e-8)
        res = solve_inner(quad([[1.0]], [-1.0]), np.zeros(1), *BOX, L=1.0, sigma=1.0, stop=stop, kind=MomentumKind.GM)
        assert res.converged and abs(res.u[0] - 1.0) <= 1e-4

    def test_warm_start_at_minimizer(self):
        # one gradient evaluation certifies the warm start
        stop = InnerStopPolicy(StopMode.GRADIENT_MAP, 1e-8)
        res = solve_inner(
            quad([[2.0]], [-2.0]), np.ones(1), *BOX, L=2.0, sigma=2.0, stop=stop, kind=MomentumKind.FGM_SIGMA
        )
        assert res.iters == 1 and res.u[0] == 1.0 and res.grad_map == 0.0

    def test_fgm_sigma_beats_gm(self):
        g = quad(np.diag([1.0, 100.0]), [-1.0, -100.0])
        lb, ub = np.zeros(2), np.full(2, 10.0)
        stop = InnerStopPolicy(StopMode.GRADIENT_MAP, 1e-6)
        counts = {
            kind: solve_inner(g, np.zeros(2), lb, ub, 100.0, 1.0, stop, kind).iters
            for kind in (MomentumKind.GM, MomentumKind.FGM_SIGMA)
        }
        assert counts[MomentumKind.FGM_SIGMA] < counts[MomentumKind.GM]

    def test_fixed_count(self):
        stop = InnerStopPolicy(StopMode.FIXED, 1e-3, k_in=7)
        res = solve_inner(quad([[1.0]], [0.0]), np.ones(1), *BOX, 1.0, 0.0, stop, MomentumKind.FGM)
        assert res.iters == 7

    def test_fixed_needs_count(self):
        with pytest.raises(ValueError):
            solve_inner(
                quad([[1.0]], [0.0]), np.ones(1), *BOX, 1.0, 0.0, InnerStopPolicy(StopMode.FIXED, 1e-3), MomentumKind.FGM
            )

    def test_gradient_map_needs_sigma(self):
        with pytest.raises(ValueError):
            stop = InnerStopPolicy(StopMode.GRADIENT_MAP, 1e-3)
            solve_inner(quad([[1.0]], [0.0]), np.ones(1), *BOX, 1.0, 0.0, stop, MomentumKind.FGM)

    def test_cap_returns_best_iterate(self, caplog):
        stop = InnerStopPolicy(StopMode.GRADIENT_MAP, 1e-30)
        g = quad(np.diag([1.0, 1e4]), [-1.0, 1.0])
        res = solve_inner(g, np.zeros(2), np.full(2, -10.0), np.full(2, 10.0), 1e4, 1.0, stop, MomentumKind.GM, cap=5)
        assert not res.converged and res.iters == 5
        assert "cap" in caplog.text

    def test_certificate_holds(self):
        # phi(x) - phi* <= eps_in when the gradient-map threshold is met
        rng = np.random.default_rng(5)
        A = rng.standard_normal((4, 4))
        Q = A.T @ A + np.eye(4)
        q = 10 * rng.standard_normal(4)
        lb, ub = -np.ones(4), np.ones(4)
        w = np.linalg.eigvalsh(Q)
        phi = lambda x: 0.5 * x @ Q @ x + q @ x
        ref = solve_inner(quad(Q, q), np.zeros(4), lb, ub, w[-1], w[0], InnerStopPolicy(StopMode.GRADIENT_MAP, 1e-15), MomentumKind.FGM_SIGMA)
        for eps_in in (1e-2, 1e-4, 1e-6):
            res = solve_inner(quad(Q, q), np.zeros(4), lb, ub, w[-1], w[0], InnerStopPolicy(StopMode.GRADIENT_MAP, eps_in), MomentumKind.FGM_SIGMA)
            assert phi(res.u) - phi(ref.u) <= eps_in + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(list(MomentumKind)))
def test_iterates_stay_in_box_and_gm_monotone(seed, kind):
    rng = np.random.default_rng(seed)
    n = 5
    A = rng.standard_normal((n, n))
    Q = A.T @ A + 0.1 * np.eye(n)
    q = 5 * rng.standard_normal(n)
    lb, ub = -np.ones(n), np.ones(n)
    w = np.linalg.eigvalsh(Q)
    rule = Momentum(kind, w[-1], w[0])
    state = InnerState.start(rng.uniform(-1, 1, n), w[-1], w[0])
    g = quad(Q, q)
    phi = lambda x: 0.5 * x @ Q @ x + q @ x
    prev = phi(state.x)
    for _ in range(60):
        fom_step(state, rule, g, lb, ub)
        assert np.all(state.x >= lb) and np.all(state.x <= ub)
        if kind is MomentumKind.GM:
            assert phi(state.x) <= prev + 1e-12
        prev = phi(state.x)


def test_theta_identities():
    theta, S = 1.0, 0.0
    for k in range(1, 10_001):
        S += theta
        assert (k + 1) / 2 <= theta <= k
        assert S == pytest.approx(theta * theta, rel=1e-9)
        theta = theta_next(theta)


def test_policy_helpers():
    assert fixed_count(2.0, 1.0, 1.0) == 2
    assert iteration_cap(2.0, math.inf, 1.0) == 1_000_000
    assert iteration_cap(2.0, 1.0, 1.0) == 100
    assert default_momentum(10.0, 1.0) is MomentumKind.FGM_SIGMA
    assert default_momentum(10.0, 0.0) is MomentumKind.FGM
    assert InnerStopPolicy(StopMode.GRADIENT_MAP, 2.0).threshold(1.0) == 2.0
