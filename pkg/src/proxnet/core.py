"""Normal map, natural residual, and the metrics shared by all algorithms.

The normal map F(z) = grad f(prox(z, gamma)) + (z - prox(z, gamma)) / gamma is
a subgradient of the composite objective at prox(z) and, unlike the classic
prox-of-gradient update, keeps stochastic gradients unbiased when grad f is
replaced by a minibatch draw. Stationarity of a swarm is measured through the
natural residual x - prox(x - gamma grad f(x), gamma) evaluated with the
global gradient at every agent's iterate.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ParameterError
from .oracle import LocalObjective
from .prox import ProxOperator


def normal_map(z: np.ndarray, grad_f, prox_op: ProxOperator, gamma: float) -> np.ndarray:
    prox_op.check_gamma(gamma)
    x = prox_op.prox(z, gamma)
    return grad_f(x) + (z - x) / gamma


def agent_normal_map(z: np.ndarray, i: int, agents, prox_op: ProxOperator, gamma: float) -> np.ndarray:
    """Normal map of agent i's local composite f_i + phi."""
    return normal_map(z, agents[i].full_gradient, prox_op, gamma)


def natural_residual(x: np.ndarray, grad_f, prox_op: ProxOperator, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    return x - prox_op.prox(x - gamma * grad_f(x), gamma)


def normal_map_lipschitz(L: float, rho: float, gamma: float) -> float:
    """Lipschitz constant (L - rho + 2/gamma) / (1 - gamma rho) of the normal map."""
    if gamma <= 0 or (rho > 0 and gamma >= 1.0 / rho):
        raise ParameterError(f"need 0 < gamma < 1/rho, got gamma={gamma}, rho={rho}")
    return (L - rho + 2.0 / gamma) / (1.0 - gamma * rho)


def consensus_error(Z: np.ndarray) -> float:
    """Squared Frobenius dispersion |Z - 1 zbar^T|_F^2 of the stacked iterates."""
    Z = np.atleast_2d(Z)
    centered = Z - Z.mean(axis=0)
    return float((centered * centered).sum())


class CompositeProblem:
    """The shared composite objective: agents' f_i, regularizer phi, and gamma.

    The global smooth part is f = (1/n) sum_i f_i with each f_i averaging its
    own local dataset, so gradients are averaged per agent first. The harness
    evaluates the stationarity metric with this global gradient (the simulator
    is omniscient), which costs a pass over everyone's data per evaluated row.
    """

    def __init__(self, agents: list[LocalObjective], prox_op: ProxOperator, gamma: float,
                 warn_gamma: bool = True):
        if not agents:
            raise ParameterError("need at least one agent")
        self.agents = list(agents)
        self.prox_op = prox_op
        self.gamma = float(gamma)
        self.rho = float(prox_op.rho)
        prox_op.check_gamma(self.gamma)
        declared = [a.L for a in self.agents if a.L is not None]
        self.L = max(declared) if declared else None
        if warn_gamma and self.L is not None and self.rho + self.L > 0:
            safe = 1.0 / (4.0 * (self.rho + self.L))
            if self.rho > 0:
                safe = min(safe, (2.0 - np.sqrt(2.0)) / (2.0 * self.rho))
            if self.gamma > safe:
                warnings.warn(
                    f"gamma={self.gamma} exceeds the safety bound {safe:.3g}; "
                    "convergence guarantees may not apply",
                    stacklevel=2,
                )

    @property
    def n(self) -> int:
        return len(self.agents)

    def lipschitz_normal_map(self) -> float:
        if self.L is None:
            raise ParameterError("no smoothness constant available on any agent")
        return normal_map_lipschitz(self.L, self.rho, self.gamma)

    def global_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.global_gradient_rows(x[None, :])[0]

    def global_gradient_rows(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        total = self.agents[0].full_gradient_rows(X).copy()
        for agent in self.agents[1:]:
            total += agent.full_gradient_rows(X)
        return total / self.n

    def smooth_value(self, x: np.ndarray) -> float:
        return float(np.mean([a.value(x) for a in self.agents]))

    def objective(self, x: np.ndarray) -> float:
        """psi(x) = f(x) + phi(x); may be +inf outside dom phi."""
        return self.smooth_value(x) + float(self.prox_op.value(x))

    def prox(self, Z: np.ndarray) -> np.ndarray:
        return self.prox_op.prox(Z, self.gamma)

    def stationarity(self, X: np.ndarray) -> float:
        """(1/n) sum_i |(1/gamma) [x_i - prox(x_i - gamma grad f(x_i), gamma)]|^2."""
        X = np.atleast_2d(X)
        grads = self.global_gradient_rows(X)
        residual = X - self.prox_op.prox(X - self.gamma * grads, self.gamma)
        return float((residual * residual).sum() / (self.gamma**2 * X.shape[0]))
