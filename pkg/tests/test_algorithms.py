import numpy as np
import pytest

from proxnet.algorithms import (
    CentralState,
    FrameworkMatrices,
    GradientEvaluator,
    RunConfig,
    StepsizeSchedule,
    init_swarm,
    run,
    step_norm_csgd,
    step_norm_dsgt,
    step_norm_ed,
    step_prox_csgd,
    step_unified,
)
from proxnet.core import CompositeProblem, consensus_error
from proxnet.errors import ConfigError, DivergedError, ParameterError, StateError
from proxnet.mixing import build_complete, build_ring, lazy, uniform_weights
from proxnet.oracle import QuadraticObjective, TanhObjective
from proxnet.prox import L1Prox, ZeroProx

GAMMA = 0.1


def quad_l1_problem(n, p=5, gamma=GAMMA, nu=0.1, seed=0, noise_rows=24, scale=0.5):
    """Strongly convex quadratics + l1, with centered per-sample gradient noise."""
    rng = np.random.default_rng(seed)
    agents = []
    for _ in range(n):
        m = rng.standard_normal((p, p)) / np.sqrt(p)
        q = m @ m.T + 0.5 * np.eye(p)
        c = rng.standard_normal(p)
        noise = scale * rng.standard_normal((noise_rows, p)) if noise_rows else None
        agents.append(QuadraticObjective(q, c, noise=noise))
    return CompositeProblem(agents, L1Prox(nu=nu), gamma, warn_gamma=False)


def tanh_problem(n, n_samples=120, dim=8, gamma=GAMMA, nu=0.01, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n_samples, dim)) / np.sqrt(dim)
    labels = rng.choice([-1.0, 1.0], size=n_samples)
    order = np.argsort(labels, kind="stable")  # heterogeneous label-sorted split
    chunks = np.array_split(order, n)
    agents = [TanhObjective(feats[c], labels[c]) for c in chunks]
    return CompositeProblem(agents, L1Prox(nu=nu), gamma, warn_gamma=False)


def advance(problem, w, algorithm, steps, alpha, seed=0, batch_size=4, matrices=None,
            collect=None):
    """Drive one algorithm for ``steps`` iterations, calling ``collect(state)``."""
    grad_eval = GradientEvaluator(problem.agents, seed, batch_size, steps)
    p = problem.agents[0].dim if hasattr(problem.agents[0], "dim") else problem.agents[0].arch.n_params
    z0 = np.zeros((problem.n, p))
    state = init_swarm(problem, z0, grad_eval, algorithm, matrices)
    if collect:
        collect(state)
    for _ in range(steps):
        if algorithm == "norm-dsgt":
            state = step_norm_dsgt(state, w.w, alpha, problem, grad_eval)
        elif algorithm == "norm-ed":
            state = step_norm_ed(state, w.w, alpha, problem, grad_eval)
        else:
            state = step_unified(state, matrices, alpha, problem, grad_eval)
        if collect:
            collect(state)
    return state


class TestStepsizeSchedule:
    def test_staged_lookup(self):
        sched = StepsizeSchedule.staged([1 / 40, 1 / 200, 1 / 1000], total=3000)
        assert sched.alpha_at(0) == 1 / 40
        assert sched.alpha_at(999) == 1 / 40
        assert sched.alpha_at(1000) == 1 / 200
        assert sched.alpha_at(2999) == 1 / 1000
        assert sched.total == 3000

    def test_remainder_goes_to_last_stage(self):
        sched = StepsizeSchedule.staged([0.1, 0.2], total=5)
        assert [d for d, _ in sched.stages] == [2, 3]

    def test_rejects_bad_stages(self):
        with pytest.raises(ParameterError):
            StepsizeSchedule(((0, 0.1),))
        with pytest.raises(ParameterError):
            StepsizeSchedule.staged([0.1, 0.2], total=10, lengths=[3, 3])


class TestFrameworkMatrices:
    def test_gradient_tracking_matrices(self):
        w = lazy(uniform_weights(build_ring(6)))
        m = FrameworkMatrices.gradient_tracking(w)
        assert np.allclose(m.a, w.w) and np.allclose(m.c, w.w)
        assert np.allclose(m.b, np.eye(6) - w.w)
        z0 = np.random.default_rng(0).standard_normal((6, 3))
        assert np.allclose(m.d0(z0), -w.w @ z0)

    def test_exact_diffusion_matrices(self):
        w = lazy(uniform_weights(build_ring(6)))
        m = FrameworkMatrices.exact_diffusion(w)
        assert np.linalg.norm(m.b @ m.b - (np.eye(6) - w.w)) < 1e-8
        assert np.allclose(m.c, np.eye(6))
        assert np.allclose(m.d0(np.ones((6, 2))), 0.0)

    def test_rejects_non_stochastic(self):
        with pytest.raises(StateError):
            FrameworkMatrices(a=np.eye(3) * 2, b=np.zeros((3, 3)), c=np.eye(3))

    def test_rejects_degenerate_b(self):
        w = lazy(uniform_weights(build_ring(4)))
        with pytest.raises(StateError, match="consensus"):
            FrameworkMatrices(a=w.w, b=np.zeros((4, 4)), c=w.w)


class TestDegenerateUnified:
    def _single_agent(self):
        obj = QuadraticObjective(np.array([[1.0]]), np.array([0.5]),
                                 noise=np.random.default_rng(1).standard_normal((10, 1)))
        return CompositeProblem([obj], ZeroProx(), GAMMA, warn_gamma=False)

    def test_reduces_to_sgd(self):
        problem = self._single_agent()
        m = FrameworkMatrices(a=np.eye(1), b=np.zeros((1, 1)), c=np.eye(1))
        grad_eval = GradientEvaluator(problem.agents, 0, 4, 5)
        state = init_swarm(problem, np.zeros((1, 1)), grad_eval, "unified", m)
        alpha = 0.2
        expected = state.z - alpha * state.g  # phi = 0 so z = x
        new = step_unified(state, m, alpha, problem, grad_eval)
        assert np.allclose(new.z, expected, atol=1e-15)

    def test_zero_stepsize_freezes_state(self):
        problem = self._single_agent()
        m = FrameworkMatrices(a=np.eye(1), b=np.zeros((1, 1)), c=np.eye(1))
        grad_eval = GradientEvaluator(problem.agents, 0, 4, 5)
        state = init_swarm(problem, np.ones((1, 1)), grad_eval, "unified", m)
        new = step_unified(state, m, 0.0, problem, grad_eval)
        assert np.array_equal(new.z, state.z)
        assert np.array_equal(new.x, state.x)


class TestMeanDynamics:
    """The row average must follow zbar+ = zbar - alpha [gbar + (zbar-xbar)/gamma]."""

    @pytest.mark.parametrize("algorithm", ["norm-dsgt", "norm-ed", "unified"])
    def test_identity_over_200_iterations(self, algorithm):
        problem = quad_l1_problem(n=8, seed=3)
        w = lazy(uniform_weights(build_ring(8)))
        matrices = FrameworkMatrices.gradient_tracking(w) if algorithm == "unified" else None
        seen = []

        def collect(state):
            seen.append((state.z.mean(axis=0), state.h(problem.gamma).mean(axis=0)))

        advance(problem, w, algorithm, steps=200, alpha=0.05, collect=collect,
                matrices=matrices)
        worst = 0.0
        for (zbar, hbar), (zbar_next, _) in zip(seen, seen[1:]):
            predicted = zbar - 0.05 * hbar
            worst = max(worst, np.abs(zbar_next - predicted).max())
        assert worst < 1e-12


class TestSpecializationEquivalence:
    def test_dsgt_matches_unified(self):
        problem = quad_l1_problem(n=8, seed=4)
        w = lazy(uniform_weights(build_ring(8)))
        traj_a, traj_b = [], []
        advance(problem, w, "norm-dsgt", 200, alpha=0.04, seed=9,
                collect=lambda s: traj_a.append(s.z.copy()))
        advance(problem, w, "unified", 200, alpha=0.04, seed=9,
                matrices=FrameworkMatrices.gradient_tracking(w),
                collect=lambda s: traj_b.append(s.z.copy()))
        worst = max(np.abs(a - b).max() for a, b in zip(traj_a, traj_b))
        assert worst < 1e-10

    def test_ed_matches_unified(self):
        problem = quad_l1_problem(n=8, seed=5)
        w = lazy(uniform_weights(build_ring(8)))
        traj_a, traj_b = [], []
        advance(problem, w, "norm-ed", 200, alpha=0.04, seed=10,
                collect=lambda s: traj_a.append(s.z.copy()))
        advance(problem, w, "unified", 200, alpha=0.04, seed=10,
                matrices=FrameworkMatrices.exact_diffusion(w),
                collect=lambda s: traj_b.append(s.z.copy()))
        worst = max(np.abs(a - b).max() for a, b in zip(traj_a, traj_b))
        assert worst < 1e-8


class TestCentralizedCollapse:
    @pytest.mark.parametrize("algorithm,matrices_factory", [
        ("norm-dsgt", None),
        ("norm-ed", None),
        ("unified", FrameworkMatrices.gradient_tracking),
        ("unified", FrameworkMatrices.exact_diffusion),
    ], ids=["dsgt", "ed", "unified-gt", "unified-ed"])
    def test_complete_averaging_reproduces_csgd(self, algorithm, matrices_factory):
        n = 6
        problem = quad_l1_problem(n=n, seed=6)
        w = uniform_weights(build_complete(n))  # exactly ones/n
        matrices = matrices_factory(w) if matrices_factory else None

        steps = 200
        grad_eval = GradientEvaluator(problem.agents, 11, 4, steps)
        central = CentralState(z=np.zeros(5), x=problem.prox(np.zeros((1, 5)))[0])
        central_traj = [central.z.copy()]
        for _ in range(steps):
            central = step_norm_csgd(central, 0.04, problem, grad_eval)
            central_traj.append(central.z.copy())

        rows = []
        advance(problem, w, algorithm, steps, alpha=0.04, seed=11,
                matrices=matrices, collect=lambda s: rows.append(s.z.copy()))
        for zc, zd in zip(central_traj, rows):
            assert np.abs(zd - zc[None, :]).max() < 1e-10


class TestTrackingIdentity:
    def test_holds_along_500_iteration_run(self):
        problem = tanh_problem(n=6, seed=7)
        w = lazy(uniform_weights(build_ring(6)))
        worst = [0.0]

        def collect(state):
            ybar = state.y.mean(axis=0)
            hbar = state.h(problem.gamma).mean(axis=0)
            worst[0] = max(worst[0], np.abs(ybar - hbar).max())

        advance(problem, w, "norm-dsgt", 500, alpha=0.02, seed=12, collect=collect)
        assert worst[0] < 1e-10

    def test_uninitialized_tracker_rejected(self):
        problem = quad_l1_problem(n=3, seed=8)
        w = uniform_weights(build_complete(3))
        grad_eval = GradientEvaluator(problem.agents, 0, 4, 5)
        state = init_swarm(problem, np.zeros((3, 5)), grad_eval, "norm-ed")
        with pytest.raises(StateError):
            step_norm_dsgt(state, w.w, 0.1, problem, grad_eval)


class TestExactDiffusionDetails:
    def test_zero_alpha_zero_gradient_is_extrapolation(self):
        # gradient-free oracle: Q = 0, c = 0
        agents = [QuadraticObjective(np.zeros((2, 2)), np.zeros(2)) for _ in range(4)]
        problem = CompositeProblem(agents, ZeroProx(), GAMMA, warn_gamma=False)
        w = uniform_weights(build_complete(4))
        grad_eval = GradientEvaluator(problem.agents, 0, None, 10)
        z0 = np.random.default_rng(13).standard_normal((4, 2))
        state = init_swarm(problem, z0, grad_eval, "norm-ed")
        s1 = step_norm_ed(state, w.w, 0.0, problem, grad_eval)
        s2 = step_norm_ed(s1, w.w, 0.0, problem, grad_eval)
        # phi = 0 so x = z and h = 0 anyway; k >= 1 update is pure extrapolation + mixing
        assert np.allclose(s2.z, w.w @ (2 * s1.z - state.z), atol=1e-15)

    def test_single_agent_reduces_to_csgd(self):
        obj = QuadraticObjective(np.array([[2.0]]), np.array([1.0]),
                                 noise=np.random.default_rng(2).standard_normal((12, 1)))
        problem = CompositeProblem([obj], L1Prox(nu=0.05), GAMMA, warn_gamma=False)
        w = uniform_weights(build_complete(1))
        steps = 50
        grad_eval = GradientEvaluator(problem.agents, 3, 4, steps)
        central = CentralState(z=np.zeros(1), x=problem.prox(np.zeros((1, 1)))[0])
        central_traj = [central.z.copy()]
        for _ in range(steps):
            central = step_norm_csgd(central, 0.05, problem, grad_eval)
            central_traj.append(central.z.copy())
        rows = []
        advance(problem, w, "norm-ed", steps, alpha=0.05, seed=3,
                collect=lambda s: rows.append(s.z.copy()))
        for zc, zd in zip(central_traj, rows):
            assert np.abs(zd[0] - zc).max() < 1e-12


class TestCentralizedBaselines:
    def test_csgd_zero_gradient_fixed_point(self):
        agents = [QuadraticObjective(np.zeros((2, 2)), np.zeros(2))]
        problem = CompositeProblem(agents, ZeroProx(), GAMMA, warn_gamma=False)
        grad_eval = GradientEvaluator(agents, 0, None, 5)
        state = CentralState(z=np.array([0.7, -0.2]), x=np.array([0.7, -0.2]))
        new = step_norm_csgd(state, 0.3, problem, grad_eval)
        assert np.array_equal(new.z, state.z)

    def test_csgd_full_batch_drives_stationarity_down(self):
        problem = quad_l1_problem(n=4, seed=9, noise_rows=0)
        grad_eval = GradientEvaluator(problem.agents, 0, None, 5000)
        state = CentralState(z=np.zeros(5), x=problem.prox(np.zeros((1, 5)))[0])
        alpha = 0.05
        for k in range(5000):
            state = step_norm_csgd(state, alpha, problem, grad_eval)
            if k % 100 == 99 and problem.stationarity(state.x[None, :]) < 1e-8:
                break
        assert problem.stationarity(state.x[None, :]) < 1e-8

    def test_prox_csgd_zero_alpha_is_identity(self):
        problem = quad_l1_problem(n=2, seed=10)
        grad_eval = GradientEvaluator(problem.agents, 0, 4, 5)
        x = np.array([0.5, -0.5, 0.1, 0.0, 1.0])
        state = CentralState(z=x.copy(), x=x.copy())
        new = step_prox_csgd(state, 0.0, problem, grad_eval)
        assert np.array_equal(new.x, x)

    def test_prox_csgd_agrees_with_csgd_at_optimum(self):
        problem = quad_l1_problem(n=3, seed=11, noise_rows=0)
        grad_eval = GradientEvaluator(problem.agents, 0, None, 6000)
        alpha = 0.05
        a = CentralState(z=np.zeros(5), x=problem.prox(np.zeros((1, 5)))[0])
        b = CentralState(z=np.zeros(5), x=np.zeros(5))
        for _ in range(6000):
            a = step_norm_csgd(a, alpha, problem, grad_eval)
            b = step_prox_csgd(b, alpha, problem, grad_eval)
        assert abs(problem.objective(a.x) - problem.objective(b.x)) < 1e-6


class TestStationaryFixedPoint:
    def test_swarm_stays_at_stationary_pair(self):
        # identical agents, zero-noise gradients: the swarm must not move
        q = np.diag([1.0, 3.0])
        c = np.array([-1.2, 0.9])
        nu, gamma, n = 0.2, 0.1, 5
        obj = QuadraticObjective(q, c)
        problem = CompositeProblem([obj] * n, L1Prox(nu=nu), gamma, warn_gamma=False)
        xstar = np.sign(-c) * np.maximum(np.abs(c) - nu, 0.0) / np.diag(q)
        zstar = xstar - gamma * obj.full_gradient(xstar)
        w = lazy(uniform_weights(build_ring(n)))
        for algorithm in ("norm-dsgt", "norm-ed"):
            grad_eval = GradientEvaluator(problem.agents, 0, None, 100)
            state = init_swarm(problem, np.tile(zstar, (n, 1)), grad_eval, algorithm)
            for _ in range(100):
                step = step_norm_dsgt if algorithm == "norm-dsgt" else step_norm_ed
                state = step(state, w.w, 0.05, problem, grad_eval)
                assert problem.stationarity(state.x) < 1e-12


class TestConsensusContraction:
    def test_alpha_zero_contracts_at_lambda_squared(self):
        agents = [QuadraticObjective(np.zeros((3, 3)), np.zeros(3)) for _ in range(8)]
        problem = CompositeProblem(agents, ZeroProx(), GAMMA, warn_gamma=False)
        w = lazy(uniform_weights(build_ring(8)))
        rng = np.random.default_rng(14)
        for _ in range(5):
            grad_eval = GradientEvaluator(agents, 0, None, 30)
            state = init_swarm(problem, rng.standard_normal((8, 3)), grad_eval, "norm-dsgt")
            prev = consensus_error(state.z)
            for _ in range(30):
                state = step_norm_dsgt(state, w.w, 0.0, problem, grad_eval)
                cur = consensus_error(state.z)
                assert cur <= w.lam**2 * prev + 1e-14
                prev = cur


class TestRun:
    def _config(self, **kw):
        problem = kw.pop("problem", tanh_problem(n=5, seed=15))
        w = kw.pop("w", lazy(uniform_weights(build_ring(5))))
        defaults = dict(
            algorithm="norm-dsgt",
            problem=problem,
            schedule=StepsizeSchedule.constant(0.02, 50),
            K=50,
            master_seed=1,
            w=w,
            batch_size=4,
            eval_every=10,
        )
        defaults.update(kw)
        return RunConfig(**defaults)

    def test_zero_iterations_records_initial_point_only(self):
        record = run(self._config(K=0, schedule=StepsizeSchedule.constant(0.02, 1)))
        assert record.iterations == [0]

    def test_row_count_contract(self):
        record = run(self._config(K=50, eval_every=10))
        assert record.iterations == [0, 10, 20, 30, 40, 50]

    def test_final_iteration_recorded_when_not_divisible(self):
        record = run(self._config(K=25, eval_every=10,
                                  schedule=StepsizeSchedule.constant(0.02, 25)))
        assert record.iterations == [0, 10, 20, 25]

    def test_same_seed_bit_identical(self):
        rec_a = run(self._config(master_seed=7))
        rec_b = run(self._config(master_seed=7))
        assert rec_a.stationarity == rec_b.stationarity
        assert rec_a.consensus == rec_b.consensus
        assert rec_a.objective == rec_b.objective

    def test_debug_checks_pass_on_healthy_run(self):
        record = run(self._config(debug_checks=True, K=30,
                                  schedule=StepsizeSchedule.constant(0.02, 30)))
        assert record.iterations[-1] == 30

    def test_diverged_run_raises_with_iteration(self):
        problem = quad_l1_problem(n=4, seed=16, noise_rows=0)
        w = lazy(uniform_weights(build_ring(4)))
        cfg = self._config(problem=problem, w=w, algorithm="norm-ed",
                           schedule=StepsizeSchedule.constant(50.0, 200), K=200,
                           batch_size=None)
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(DivergedError) as err:
            run(cfg)
        assert err.value.iteration >= 1

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ConfigError, match="unknown algorithm"):
            self._config(algorithm="sgd")

    def test_centralized_run_has_zero_consensus(self):
        record = run(self._config(algorithm="norm-csgd", w=None))
        assert all(c == 0.0 for c in record.consensus)
