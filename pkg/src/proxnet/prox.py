"""Proximal operators for weakly convex regularizers.

Every operator carries its weak-convexity constant ``rho`` (phi + rho/2 |x|^2
convex). All shipped operators are convex (rho = 0), but the 1/(1 - gamma*rho)
nonexpansiveness factor is threaded through so a user-supplied weakly convex
regularizer plugs in unchanged. ``prox(x, gamma)`` minimizes
phi(y) + |y - x|^2 / (2 gamma).

phi values are extended-real: an infeasible point evaluates to ``np.inf``
exactly (IEEE infinity, not a large float), so domain checks are exact.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidDomainError, ParameterError


def _check_gamma(gamma: float, rho: float = 0.0) -> None:
    if gamma <= 0:
        raise ParameterError(f"prox parameter gamma must be positive, got {gamma}")
    if rho > 0 and gamma >= 1.0 / rho:
        raise ParameterError(f"gamma={gamma} must be < 1/rho = {1.0 / rho} for rho-weakly convex phi")


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def prox_zero(x: np.ndarray, gamma: float) -> np.ndarray:
    _check_gamma(gamma)
    return np.asarray(x, dtype=np.float64).copy()


def prox_l1(x: np.ndarray, gamma: float, nu: float) -> np.ndarray:
    _check_gamma(gamma)
    if nu <= 0:
        raise ParameterError(f"nu must be positive, got {nu}")
    return soft_threshold(np.asarray(x, dtype=np.float64), gamma * nu)


def prox_elastic_net(x: np.ndarray, gamma: float, nu1: float, nu2: float) -> np.ndarray:
    """Prox of nu1*|x|_1 + nu2*|x|_2^2: shrink then scale by 1/(1 + 2 gamma nu2).

    nu2 = 0 degenerates exactly to the plain soft threshold.
    """
    _check_gamma(gamma)
    if nu1 <= 0 or nu2 < 0:
        raise ParameterError(f"need nu1 > 0 and nu2 >= 0, got {nu1}, {nu2}")
    x = np.asarray(x, dtype=np.float64)
    return soft_threshold(x, gamma * nu1) / (1.0 + 2.0 * gamma * nu2)


def prox_box(x: np.ndarray, gamma: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    _check_gamma(gamma)
    x = np.asarray(x, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), x.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), x.shape)
    if np.any(lo > hi):
        raise InvalidDomainError("box bounds need lo <= hi in every component")
    return np.clip(x, lo, hi)


class ProxOperator:
    """A gamma-parametrized proximal map with its regularizer value.

    Subclasses implement ``value`` (vectorized over the last axis: an input of
    shape (..., p) yields (...)) and ``prox``.
    """

    rho: float = 0.0

    def value(self, x: np.ndarray) -> np.ndarray | float:
        raise NotImplementedError

    def prox(self, x: np.ndarray, gamma: float) -> np.ndarray:
        raise NotImplementedError

    def check_gamma(self, gamma: float) -> None:
        _check_gamma(gamma, self.rho)


class ZeroProx(ProxOperator):
    """phi = 0; the prox is the identity and the framework loses its prox step."""

    def value(self, x):
        x = np.asarray(x)
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0

    def prox(self, x, gamma):
        return prox_zero(x, gamma)


class L1Prox(ProxOperator):
    def __init__(self, nu: float):
        if nu <= 0:
            raise ParameterError(f"nu must be positive, got {nu}")
        self.nu = nu

    def value(self, x):
        return self.nu * np.abs(x).sum(axis=-1)

    def prox(self, x, gamma):
        return prox_l1(x, gamma, self.nu)


class ElasticNetProx(ProxOperator):
    def __init__(self, nu1: float, nu2: float):
        if nu1 <= 0 or nu2 < 0:
            raise ParameterError(f"need nu1 > 0 and nu2 >= 0, got {nu1}, {nu2}")
        self.nu1 = nu1
        self.nu2 = nu2

    def value(self, x):
        x = np.asarray(x)
        return self.nu1 * np.abs(x).sum(axis=-1) + self.nu2 * (x * x).sum(axis=-1)

    def prox(self, x, gamma):
        return prox_elastic_net(x, gamma, self.nu1, self.nu2)


class BoxProx(ProxOperator):
    """Indicator of [lo, hi]: value 0 inside, inf outside; prox is the projection."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if np.any(self.lo > self.hi):
            raise InvalidDomainError("box bounds need lo <= hi in every component")

    def value(self, x):
        x = np.asarray(x)
        inside = ((x >= self.lo) & (x <= self.hi)).all(axis=-1)
        return np.where(inside, 0.0, np.inf) if x.ndim > 1 else (0.0 if inside else np.inf)

    def prox(self, x, gamma):
        return prox_box(x, gamma, self.lo, self.hi)


def brute_force_prox(phi, x: np.ndarray, gamma: float, grid_points: int = 1201, span: float = 3.0) -> np.ndarray:
    """Grid argmin of phi(y) + |y - x|^2 / (2 gamma) over [x - span, x + span].

    Test-only oracle, dimension <= 2. ``phi`` must accept an (m, p) array of
    candidate points and return their m values (np.inf allowed).
    """
    _check_gamma(gamma)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    p = x.shape[0]
    if p > 2:
        raise ParameterError(f"brute_force_prox supports dimension <= 2, got {p}")
    axes = [np.linspace(xi - span, xi + span, grid_points) for xi in x]
    if p == 1:
        cand = axes[0][:, None]
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        cand = np.column_stack([g0.ravel(), g1.ravel()])
    obj = np.asarray(phi(cand), dtype=np.float64) + ((cand - x) ** 2).sum(axis=1) / (2.0 * gamma)
    return cand[int(np.argmin(obj))].copy()


def make_prox(kind: str, **params) -> ProxOperator:
    """Build a regularizer from config-style parameters.

    Kinds: "none", "l1" (nu), "elastic_net" (nu1, nu2), "box" (lo, hi).
    """
    if kind == "none":
        return ZeroProx()
    if kind == "l1":
        return L1Prox(nu=params["nu"])
    if kind == "elastic_net":
        return ElasticNetProx(nu1=params["nu1"], nu2=params["nu2"])
    if kind == "box":
        return BoxProx(lo=params["lo"], hi=params["hi"])
    raise ParameterError(f"unknown regularizer kind {kind!r}; expected none|l1|elastic_net|box")
