"""The unified two-matrix-family engine and its named instantiations.

One iteration of the unified scheme is

    Z+ = A [C Z - alpha (G + (Z - X)/gamma)] - B D
    D+ = D + B Z+
    X+ = prox(Z+, gamma)   row-wise,

with A, C doubly stochastic and B vanishing exactly on consensus states. The
gradient-tracking method is the (A=W, B=I-W, C=W, D0=-W Z0) instance written
in its communication-efficient two-variable form; the exact-diffusion method
is (A=W, B=(I-W)^{1/2}, C=I, D0=0) written as a local step plus correction.
Both are exercised against the unified engine trajectory-for-trajectory in
tests, sharing minibatch draws through per-(agent, iteration) index blocks.

Every update leaves the row average obeying

    zbar+ = zbar - alpha [gbar + (zbar - xbar)/gamma],

the centralized normal-map SGD recursion, which is the design invariant the
whole family rests on.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .core import CompositeProblem, consensus_error
from .errors import ConfigError, DivergedError, ParameterError, StateError
from .mixing import MixingMatrix, sqrt_I_minus_W
from .oracle import TanhObjective, agent_seed

ALGORITHMS = ("norm-dsgt", "norm-ed", "norm-csgd", "prox-csgd")
_CENTRALIZED = ("norm-csgd", "prox-csgd")


@dataclass(frozen=True)
class StepsizeSchedule:
    """Piecewise-constant stepsizes: a list of (duration, alpha) stages."""

    stages: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.stages or any(d <= 0 or a <= 0 for d, a in self.stages):
            raise ParameterError("schedule needs positive durations and stepsizes")

    @property
    def total(self) -> int:
        return sum(d for d, _ in self.stages)

    def alpha_at(self, k: int) -> float:
        if k < 0:
            raise ParameterError(f"iteration index must be >= 0, got {k}")
        acc = 0
        for duration, alpha in self.stages:
            acc += duration
            if k < acc:
                return alpha
        return self.stages[-1][1]

    @classmethod
    def constant(cls, alpha: float, total: int) -> "StepsizeSchedule":
        return cls(((total, alpha),))

    @classmethod
    def staged(cls, alphas, total: int, lengths=None) -> "StepsizeSchedule":
        """Split ``total`` into len(alphas) stages; equal lengths by default,
        with the remainder going to the last stage."""
        alphas = list(alphas)
        if lengths is None:
            base = total // len(alphas)
            lengths = [base] * len(alphas)
            lengths[-1] += total - base * len(alphas)
        lengths = list(lengths)
        if len(lengths) != len(alphas) or sum(lengths) != total:
            raise ParameterError(f"stage lengths {lengths} must sum to {total}")
        return cls(tuple(zip(lengths, alphas)))


@dataclass(frozen=True)
class FrameworkMatrices:
    """The (A, B, C, D0-rule) tuple instantiating the unified engine."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d0_rule: str = "zero"  # "zero" | "minus-w-z0" (D0 = -A Z0)

    def __post_init__(self):
        n = self.a.shape[0]
        ones = np.ones(n)
        for name, m in (("A", self.a), ("C", self.c)):
            if m.shape != (n, n):
                raise StateError(f"{name} must be {n}x{n}")
            if np.abs(m @ ones - ones).max() > 1e-12 or np.abs(ones @ m - ones).max() > 1e-12:
                raise StateError(f"{name} must be doubly stochastic")
        if self.b.shape != (n, n):
            raise StateError(f"B must be {n}x{n}")
        if np.linalg.norm(self.b @ ones) > 1e-10:
            raise StateError("B must vanish on the consensus direction")
        if n > 1:
            sv = np.linalg.svd(self.b, compute_uv=False)
            if sv[-2] <= 1e-12:
                raise StateError("B must be nonzero off the consensus direction")
        if self.d0_rule not in ("zero", "minus-w-z0"):
            raise StateError(f"unknown d0 rule {self.d0_rule!r}")

    def d0(self, z0: np.ndarray) -> np.ndarray:
        if self.d0_rule == "zero":
            return np.zeros_like(z0)
        return -self.a @ z0

    @classmethod
    def gradient_tracking(cls, w: MixingMatrix) -> "FrameworkMatrices":
        eye = np.eye(w.n)
        return cls(a=w.w, b=eye - w.w, c=w.w, d0_rule="minus-w-z0")

    @classmethod
    def exact_diffusion(cls, w: MixingMatrix) -> "FrameworkMatrices":
        return cls(a=w.w, b=sqrt_I_minus_W(w), c=np.eye(w.n), d0_rule="zero")


class GradientEvaluator:
    """Stacked minibatch gradients with one index block per (agent, iteration).

    Index blocks are pre-drawn from per-agent seeded streams, so two algorithm
    implementations fed the same evaluator see identical gradient noise at the
    same iterate index, and a re-run with the same master seed is bit-identical.
    ``batch_size=None`` means deterministic full-batch gradients.
    """

    def __init__(self, agents, master_seed: int, batch_size: int | None, total_iters: int):
        self.agents = list(agents)
        self.batch_size = batch_size
        n = len(self.agents)
        self._blocks = None
        if batch_size is not None:
            self._blocks = []
            for i, agent in enumerate(self.agents):
                rng = np.random.default_rng(agent_seed(master_seed, i))
                self._blocks.append(
                    rng.integers(0, agent.n_samples, size=(total_iters + 1, batch_size))
                )
        self._stacked = None
        if batch_size is not None and all(isinstance(a, TanhObjective) for a in self.agents):
            self._stacked = kernels.stack_tanh_data(self.agents)
            self._idx_buf = np.empty((n, batch_size), dtype=np.int64)
            self._out_buf = np.empty((n, self.agents[0].features.shape[1]))

    def __call__(self, X: np.ndarray, k: int) -> np.ndarray:
        X = np.atleast_2d(X)
        if self._blocks is None:
            return np.stack([a.full_gradient(x) for a, x in zip(self.agents, X)])
        if self._stacked is not None:
            feats, labs, offsets = self._stacked
            for i, block in enumerate(self._blocks):
                self._idx_buf[i] = block[k]
            kernels.tanh_minibatch_grads(feats, labs, offsets, self._idx_buf,
                                         np.ascontiguousarray(X), self._out_buf)
            return self._out_buf.copy()
        return np.stack(
            [a.batch_gradient(x, block[k]) for a, x, block in zip(self.agents, X, self._blocks)]
        )


@dataclass
class SwarmState:
    """Stacked iterates of all agents at iteration k.

    ``g`` holds the minibatch gradients drawn at the rows of ``x`` with index
    block k. Algorithm-specific extras: ``y`` (tracking), ``d`` (dual
    accumulator), and the previous-iterate buffers the diffusion update needs.
    """

    z: np.ndarray
    x: np.ndarray
    g: np.ndarray
    k: int = 0
    y: np.ndarray | None = None
    d: np.ndarray | None = None
    z_prev: np.ndarray | None = None
    h_prev: np.ndarray | None = None
    alpha_prev: float | None = None

    def h(self, gamma: float) -> np.ndarray:
        """Stochastic normal-map directions g + (z - x)/gamma."""
        return self.g + (self.z - self.x) / gamma


def init_swarm(problem: CompositeProblem, z0: np.ndarray, grad_eval: GradientEvaluator,
               algorithm: str, matrices: FrameworkMatrices | None = None) -> SwarmState:
    z0 = np.atleast_2d(np.asarray(z0, dtype=np.float64))
    x0 = problem.prox(z0)
    g0 = grad_eval(x0, 0)
    state = SwarmState(z=z0, x=x0, g=g0)
    if algorithm == "norm-dsgt":
        state.y = state.h(problem.gamma)
    elif algorithm == "unified":
        if matrices is None:
            raise StateError("unified engine needs FrameworkMatrices")
        state.d = matrices.d0(z0)
    return state


def step_norm_dsgt(state: SwarmState, w: np.ndarray, alpha: float,
                   problem: CompositeProblem, grad_eval: GradientEvaluator) -> SwarmState:
    """Tracking update: local step along y, mix, prox, refresh the tracker."""
    if state.y is None:
        raise StateError("tracking variable uninitialized; use init_swarm(..., 'norm-dsgt')")
    gamma = problem.gamma
    h_old = state.h(gamma)
    z_new = w @ (state.z - alpha * state.y)
    x_new = problem.prox(z_new)
    g_new = grad_eval(x_new, state.k + 1)
    h_new = g_new + (z_new - x_new) / gamma
    y_new = w @ state.y + h_new - h_old
    return SwarmState(z=z_new, x=x_new, g=g_new, k=state.k + 1, y=y_new)


def step_norm_ed(state: SwarmState, w: np.ndarray, alpha: float,
                 problem: CompositeProblem, grad_eval: GradientEvaluator) -> SwarmState:
    """Diffusion update: subgradient step with correction, then mix and prox.

    The k-term uses the current alpha and the (k-1)-term the alpha it was
    originally stepped with, i.e. the literal time-indexed recursion; this is
    what makes the method wobble right after a stage boundary.
    """
    gamma = problem.gamma
    h_cur = state.h(gamma)
    if state.z_prev is None:
        z_half = state.z - alpha * h_cur
    else:
        z_half = (2.0 * state.z - state.z_prev
                  - alpha * h_cur + state.alpha_prev * state.h_prev)
    z_new = w @ z_half
    x_new = problem.prox(z_new)
    g_new = grad_eval(x_new, state.k + 1)
    return SwarmState(z=z_new, x=x_new, g=g_new, k=state.k + 1,
                      z_prev=state.z, h_prev=h_cur, alpha_prev=alpha)


def step_unified(state: SwarmState, matrices: FrameworkMatrices, alpha: float,
                 problem: CompositeProblem, grad_eval: GradientEvaluator) -> SwarmState:
    if state.d is None:
        raise StateError("dual accumulator uninitialized; use init_swarm(..., 'unified')")
    if state.z.shape != state.x.shape or state.z.shape[0] != matrices.a.shape[0]:
        raise StateError("state / matrices dimension mismatch")
    gamma = problem.gamma
    z_new = matrices.a @ (matrices.c @ state.z - alpha * state.h(gamma)) - matrices.b @ state.d
    d_new = state.d + matrices.b @ z_new
    x_new = problem.prox(z_new)
    g_new = grad_eval(x_new, state.k + 1)
    return SwarmState(z=z_new, x=x_new, g=g_new, k=state.k + 1, d=d_new)


@dataclass
class CentralState:
    """Server-side iterate for the centralized baselines."""

    z: np.ndarray
    x: np.ndarray
    k: int = 0


def step_norm_csgd(state: CentralState, alpha: float, problem: CompositeProblem,
                   grad_eval: GradientEvaluator) -> CentralState:
    """z+ = z - alpha [gbar + (z - x)/gamma], averaging n independent draws at x."""
    n = problem.n
    gbar = grad_eval(np.tile(state.x, (n, 1)), state.k).mean(axis=0)
    z_new = state.z - alpha * (gbar + (state.z - state.x) / problem.gamma)
    x_new = problem.prox(z_new)
    return CentralState(z=z_new, x=x_new, k=state.k + 1)


def step_prox_csgd(state: CentralState, alpha: float, problem: CompositeProblem,
                   grad_eval: GradientEvaluator) -> CentralState:
    """Classic prox-SGD baseline: x+ = prox_{alpha phi}(x - alpha gbar).

    The prox parameter is the stepsize itself; alpha = 0 degenerates to the
    identity (the prox limit), still consuming the iteration's gradient draw
    so the index blocks stay aligned across algorithms.
    """
    n = problem.n
    gbar = grad_eval(np.tile(state.x, (n, 1)), state.k).mean(axis=0)
    if alpha == 0.0:
        return CentralState(z=state.x.copy(), x=state.x.copy(), k=state.k + 1)
    x_new = problem.prox_op.prox(state.x - alpha * gbar, alpha)
    return CentralState(z=x_new, x=x_new, k=state.k + 1)


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulated run needs, with materialized objects."""

    algorithm: str
    problem: CompositeProblem
    schedule: StepsizeSchedule
    K: int
    master_seed: int
    w: MixingMatrix | None = None
    batch_size: int | None = 16
    eval_every: int = 10
    z0: np.ndarray | None = None
    debug_checks: bool = False
    matrices: FrameworkMatrices | None = None  # for algorithm="unified"

    def __post_init__(self):
        if self.K < 0:
            raise ConfigError(f"K must be >= 0, got {self.K}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        valid = ALGORITHMS + ("unified",)
        if self.algorithm not in valid:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {valid}")
        if self.algorithm not in _CENTRALIZED and self.algorithm != "unified" and self.w is None:
            raise ConfigError(f"{self.algorithm} needs a mixing matrix")
        if self.algorithm == "unified" and self.matrices is None:
            raise ConfigError("unified engine needs FrameworkMatrices")


@dataclass
class RunRecord:
    """Metric traces of one run: rows of (iteration, metrics, wall time)."""

    iterations: list[int] = field(default_factory=list)
    stationarity: list[float] = field(default_factory=list)
    consensus: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    abort_reason: str | None = None

    COLUMNS = ("iteration", "stationarity", "consensus", "objective", "seconds")

    def append(self, k, stat, cons, obj, secs):
        if self.iterations and k <= self.iterations[-1]:
            raise StateError("iterations must be strictly increasing")
        self.iterations.append(int(k))
        self.stationarity.append(float(stat))
        self.consensus.append(float(cons))
        self.objective.append(float(obj))
        self.seconds.append(float(secs))

    def column(self, name: str) -> list:
        if name not in self.COLUMNS:
            raise KeyError(f"no column {name!r}; have {self.COLUMNS}")
        return self.iterations if name == "iteration" else getattr(self, name)

    def rows(self):
        return zip(self.iterations, self.stationarity, self.consensus, self.objective, self.seconds)


def _dimension(problem: CompositeProblem) -> int:
    agent = problem.agents[0]
    if hasattr(agent, "dim"):
        return agent.dim
    if hasattr(agent, "arch"):
        return agent.arch.n_params
    raise ConfigError("cannot infer parameter dimension from the first agent")


def run(config: RunConfig) -> RunRecord:
    """Execute one run and collect metric traces.

    Records at iteration 0, every ``eval_every`` iterations, and at K.
    Deterministic given the master seed (wall-time column aside). Raises
    DivergedError naming the iteration if any iterate goes non-finite.
    """
    problem = config.problem
    n, p = problem.n, _dimension(problem)
    gamma = problem.gamma
    grad_eval = GradientEvaluator(problem.agents, config.master_seed, config.batch_size, config.K)

    z0 = np.zeros((n, p)) if config.z0 is None else np.atleast_2d(np.asarray(config.z0, dtype=np.float64))
    if z0.shape == (1, p) and n > 1:
        z0 = np.tile(z0, (n, 1))

    centralized = config.algorithm in _CENTRALIZED
    if centralized:
        zc = z0[0].copy()
        cstate = CentralState(z=zc, x=problem.prox(zc[None, :])[0])
    else:
        state = init_swarm(problem, z0, grad_eval, config.algorithm, config.matrices)

    record = RunRecord(metadata={
        "algorithm": config.algorithm,
        "n": n,
        "p": p,
        "K": config.K,
        "gamma": gamma,
        "seed": config.master_seed,
        "batch_size": config.batch_size,
        "eval_every": config.eval_every,
        "backend": kernels.BACKEND,
    })

    t0 = time.perf_counter()

    def evaluate(k):
        if centralized:
            X = cstate.x[None, :]
            cons = 0.0
            xbar = cstate.x
        else:
            X = state.x
            cons = consensus_error(state.z)
            xbar = state.x.mean(axis=0)
        record.append(k, problem.stationarity(X), cons, problem.objective(xbar),
                      time.perf_counter() - t0)

    evaluate(0)
    for k in range(config.K):
        alpha = config.schedule.alpha_at(k)
        if centralized:
            step = step_norm_csgd if config.algorithm == "norm-csgd" else step_prox_csgd
            cstate = step(cstate, alpha, problem, grad_eval)
            current = cstate.z
        else:
            if config.debug_checks:
                zbar_pred = state.z.mean(axis=0) - alpha * state.h(gamma).mean(axis=0)
            if config.algorithm == "norm-dsgt":
                state = step_norm_dsgt(state, config.w.w, alpha, problem, grad_eval)
            elif config.algorithm == "norm-ed":
                state = step_norm_ed(state, config.w.w, alpha, problem, grad_eval)
            else:
                state = step_unified(state, config.matrices, alpha, problem, grad_eval)
            current = state.z
            if config.debug_checks:
                dev = np.abs(state.z.mean(axis=0) - zbar_pred).max()
                if dev > 1e-12:
                    raise StateError(f"mean-dynamics identity violated at k={k + 1}: {dev:.3e}")
                if state.y is not None:
                    ybar = state.y.mean(axis=0)
                    hbar = state.h(gamma).mean(axis=0)
                    if np.abs(ybar - hbar).max() > 1e-10:
                        raise StateError(f"tracking identity violated at k={k + 1}")
        if not np.all(np.isfinite(current)):
            record.abort_reason = f"diverged at iteration {k + 1}"
            raise DivergedError(k + 1)
        if (k + 1) % config.eval_every == 0 or k + 1 == config.K:
            evaluate(k + 1)
    return record


def run_seeds(config: RunConfig, seeds) -> list[RunRecord]:
    """Repeat a run over several master seeds (the repetition axis of the figures)."""
    return [run(replace(config, master_seed=int(s))) for s in seeds]
