"""Per-agent smooth objectives with exact and minibatch stochastic gradients.

Three losses: the tanh binary-classification loss, a one-hidden-layer
sigmoid/softmax network with cross-entropy, and a quadratic testbed with an
optional zero-mean per-sample noise decomposition. Minibatches are drawn
uniformly with replacement, which makes the batch-mean gradient conditionally
unbiased and puts its variance under the envelope
E|g - grad f|^2 <= C0 (f(x) - f*) + sigma^2 with per-oracle fitted constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidOracleError

# sup |d^2/dm^2 (1 - tanh m)| = max 2t(1-t^2) over t in (-1,1), at t = 1/sqrt(3)
_TANH_CURVATURE = 4.0 / (3.0 * np.sqrt(3.0))


def agent_seed(master_seed: int, agent_id: int) -> np.random.SeedSequence:
    """Per-agent sub-seed; distinct agents get statistically independent streams."""
    return np.random.SeedSequence((int(master_seed), int(agent_id)))


class MinibatchSampler:
    """Stateful per-agent index sampler, uniform with replacement by default."""

    def __init__(self, batch_size: int, seed, replace: bool = True):
        if batch_size < 1:
            raise InvalidOracleError(f"batch_size must be >= 1, got {batch_size}")
        self.batch_size = batch_size
        self.replace = replace
        self.rng = np.random.default_rng(seed)

    def draw(self, n_items: int) -> np.ndarray:
        if self.replace:
            return self.rng.integers(0, n_items, size=self.batch_size)
        return self.rng.permutation(n_items)[: self.batch_size]


class LocalObjective:
    """One agent's smooth loss f_i over its local dataset."""

    loss_kind: str
    L: float | None  # Lipschitz constant of grad f_i, declared or estimated
    f_star: float  # analytic lower bound of f_i
    n_samples: int

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_gradient(self, x: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def full_gradient_rows(self, X: np.ndarray) -> np.ndarray:
        """Full gradient at each row of X; generic row loop, overridden where it matters."""
        return np.stack([self.full_gradient(x) for x in np.atleast_2d(X)])

    def sample_gradient_sq_norms(self, x: np.ndarray) -> np.ndarray:
        """|grad of each single sample|^2 at x, for exact minibatch variance."""
        raise NotImplementedError

    def single_draw_variance(self, x: np.ndarray, batch_size: int) -> float:
        """Exact E|g_batch - grad f_i|^2 for a uniform-with-replacement batch."""
        g = self.full_gradient(x)
        second_moment = float(np.mean(self.sample_gradient_sq_norms(x)))
        return max(second_moment - float(g @ g), 0.0) / batch_size


def sample_gradient(obj: LocalObjective, x: np.ndarray, sampler: MinibatchSampler) -> np.ndarray:
    """One conditionally unbiased minibatch gradient draw at x."""
    return obj.batch_gradient(x, sampler.draw(obj.n_samples))


class TanhObjective(LocalObjective):
    """f(x) = mean_j [1 - tanh(b_j a_j.x)] with labels b in {-1, +1}."""

    loss_kind = "tanh-binary"

    def __init__(self, features: np.ndarray, labels: np.ndarray):
        feats = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
        labs = np.asarray(labels, dtype=np.float64).ravel()
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise InvalidOracleError("tanh oracle needs a nonempty (N, d) feature matrix")
        if labs.shape[0] != feats.shape[0]:
            raise InvalidOracleError("feature / label count mismatch")
        if not np.all(np.isin(labs, (-1.0, 1.0))):
            raise InvalidOracleError("tanh oracle labels must be -1 or +1")
        self.features = feats
        self.labels = labs
        self.n_samples, self.dim = feats.shape
        self.f_star = 0.0  # 1 - tanh in (0, 2)
        gram = feats.T @ feats / self.n_samples
        self.L = _TANH_CURVATURE * float(np.linalg.eigvalsh(gram)[-1])

    def _margins(self, x, idx=None):
        feats = self.features if idx is None else self.features[idx]
        labs = self.labels if idx is None else self.labels[idx]
        return feats, labs, (feats @ x) * labs

    def value(self, x):
        _, _, m = self._margins(x)
        return float(np.mean(1.0 - np.tanh(m)))

    def full_gradient(self, x):
        feats, labs, m = self._margins(x)
        coeff = (1.0 - np.tanh(m) ** 2) * labs
        return -(coeff @ feats) / self.n_samples

    def batch_gradient(self, x, idx):
        feats, labs, m = self._margins(x, idx)
        coeff = (1.0 - np.tanh(m) ** 2) * labs
        return -(coeff @ feats) / len(idx)

    def full_gradient_rows(self, X):
        X = np.atleast_2d(X)
        margins = (self.features @ X.T) * self.labels[:, None]
        coeff = (1.0 - np.tanh(margins) ** 2) * self.labels[:, None]
        return -(coeff.T @ self.features) / self.n_samples

    def sample_gradient_sq_norms(self, x):
        _, _, m = self._margins(x)
        row_sq = (self.features**2).sum(axis=1)
        return (1.0 - np.tanh(m) ** 2) ** 2 * row_sq


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class MlpArch:
    d_in: int
    d_hidden: int
    d_out: int

    @property
    def n_params(self) -> int:
        return self.d_hidden * (self.d_in + 1) + self.d_out * (self.d_hidden + 1)

    def unpack(self, x: np.ndarray):
        if x.shape != (self.n_params,):
            raise InvalidOracleError(
                f"parameter vector has length {x.shape}, arch {self} needs {self.n_params}"
            )
        h, di, do = self.d_hidden, self.d_in, self.d_out
        k = 0
        w1 = x[k : k + h * di].reshape(h, di)
        k += h * di
        b1 = x[k : k + h]
        k += h
        w2 = x[k : k + do * h].reshape(do, h)
        k += do * h
        b2 = x[k : k + do]
        return w1, b1, w2, b2

    def pack(self, w1, b1, w2, b2) -> np.ndarray:
        return np.concatenate([w1.ravel(), b1.ravel(), w2.ravel(), b2.ravel()])


class MlpObjective(LocalObjective):
    """One-hidden-layer sigmoid network with softmax cross-entropy loss.

    Parameters are a flat vector in the layout [W1, b1, W2, b2]. The loss is
    not globally smooth with a cheap closed-form constant, so L is left
    unset; callers that need it must estimate it themselves.
    """

    loss_kind = "mlp-multiclass"

    def __init__(self, features: np.ndarray, labels: np.ndarray, arch: MlpArch):
        feats = np.asarray(features, dtype=np.float64)
        labs = np.asarray(labels).ravel().astype(np.int64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise InvalidOracleError("mlp oracle needs a nonempty (N, d) feature matrix")
        if feats.shape[1] != arch.d_in:
            raise InvalidOracleError(f"features have {feats.shape[1]} columns, arch wants {arch.d_in}")
        if labs.shape[0] != feats.shape[0]:
            raise InvalidOracleError("feature / label count mismatch")
        if labs.min() < 0 or labs.max() >= arch.d_out:
            raise InvalidOracleError(f"labels must lie in [0, {arch.d_out})")
        self.features = feats
        self.labels = labs
        self.arch = arch
        self.n_samples = feats.shape[0]
        self.f_star = 0.0  # cross-entropy is nonnegative
        self.L = None

    def _forward(self, x, idx):
        w1, b1, w2, b2 = self.arch.unpack(x)
        feats = self.features if idx is None else self.features[idx]
        labs = self.labels if idx is None else self.labels[idx]
        hidden = _sigmoid(feats @ w1.T + b1)
        logits = hidden @ w2.T + b2
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        nll = -np.log(probs[np.arange(len(labs)), labs])
        return feats, labs, hidden, probs, float(nll.mean()), (w1, b1, w2, b2)

    def value(self, x):
        return self._forward(x, None)[4]

    def loss_and_gradient(self, x, idx=None):
        feats, labs, hidden, probs, loss, (w1, b1, w2, b2) = self._forward(x, idx)
        batch = len(labs)
        delta2 = probs.copy()
        delta2[np.arange(batch), labs] -= 1.0
        delta2 /= batch
        dw2 = delta2.T @ hidden
        db2 = delta2.sum(axis=0)
        u = (delta2 @ w2) * hidden * (1.0 - hidden)
        dw1 = u.T @ feats
        db1 = u.sum(axis=0)
        return loss, self.arch.pack(dw1, db1, dw2, db2)

    def full_gradient(self, x):
        return self.loss_and_gradient(x, None)[1]

    def batch_gradient(self, x, idx):
        return self.loss_and_gradient(x, idx)[1]

    def sample_gradient_sq_norms(self, x):
        feats, labs, hidden, probs, _, (w1, b1, w2, b2) = self._forward(x, None)
        delta2 = probs.copy()
        delta2[np.arange(len(labs)), labs] -= 1.0
        u = (delta2 @ w2) * hidden * (1.0 - hidden)
        d2_sq = (delta2**2).sum(axis=1)
        u_sq = (u**2).sum(axis=1)
        h_sq = (hidden**2).sum(axis=1)
        a_sq = (feats**2).sum(axis=1)
        return d2_sq * (1.0 + h_sq) + u_sq * (1.0 + a_sq)


class QuadraticObjective(LocalObjective):
    """f(x) = x.Q x / 2 + c.x - min value, optionally with per-sample noise.

    The noise rows are centered exactly, so the full gradient is Q x + c and a
    uniform minibatch of noise rows gives an unbiased stochastic gradient with
    state-independent variance (sigma^2-only envelope).
    """

    loss_kind = "quadratic"

    def __init__(self, q: np.ndarray, c: np.ndarray, noise: np.ndarray | None = None):
        q = np.asarray(q, dtype=np.float64)
        c = np.asarray(c, dtype=np.float64).ravel()
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise InvalidOracleError("Q must be square")
        if np.abs(q - q.T).max() > 1e-12:
            raise InvalidOracleError("Q must be symmetric")
        if c.shape[0] != q.shape[0]:
            raise InvalidOracleError("c length must match Q")
        eigs = np.linalg.eigvalsh(q)
        if eigs[0] < -1e-10:
            raise InvalidOracleError(f"Q must be PSD, smallest eigenvalue {eigs[0]:.3e}")
        self.q = q
        self.c = c
        self.dim = c.shape[0]
        self.L = float(eigs[-1])
        xstar, *_ = np.linalg.lstsq(q, -c, rcond=None)
        if np.linalg.norm(q @ xstar + c) > 1e-8 * max(1.0, np.linalg.norm(c)):
            raise InvalidOracleError("c outside range(Q): quadratic unbounded below")
        self.minimizer = xstar
        self._offset = 0.5 * xstar @ q @ xstar + c @ xstar
        self.f_star = 0.0
        if noise is not None:
            noise = np.asarray(noise, dtype=np.float64)
            if noise.ndim != 2 or noise.shape[1] != self.dim:
                raise InvalidOracleError("noise must be (M, d)")
            noise = noise - noise.mean(axis=0)  # exact zero mean => unbiased batches
        self.noise = noise
        self.n_samples = 1 if noise is None else noise.shape[0]

    def value(self, x):
        return float(0.5 * x @ self.q @ x + self.c @ x - self._offset)

    def full_gradient(self, x):
        return self.q @ x + self.c

    def batch_gradient(self, x, idx):
        g = self.q @ x + self.c
        if self.noise is not None:
            g = g + self.noise[idx].mean(axis=0)
        return g

    def full_gradient_rows(self, X):
        return np.atleast_2d(X) @ self.q.T + self.c

    def sample_gradient_sq_norms(self, x):
        g = self.full_gradient(x)
        if self.noise is None:
            return np.array([float(g @ g)])
        return ((g + self.noise) ** 2).sum(axis=1)


@dataclass(frozen=True)
class ABCMeta:
    """Fitted variance-envelope constants for one oracle."""

    c0: float
    sigma: float

    def bound(self, value_gap: float) -> float:
        return self.c0 * value_gap + self.sigma**2


def fit_abc(obj: LocalObjective, points: np.ndarray, batch_size: int) -> ABCMeta:
    """Fit (C0, sigma) so the exact per-draw variance sits under the envelope.

    Two-parameter least squares of variance against the value gap over the
    calibration points, clamped nonnegative, then scaled up so the envelope
    covers every calibration point.
    """
    points = np.atleast_2d(points)
    gaps = np.array([obj.value(x) - obj.f_star for x in points])
    variances = np.array([obj.single_draw_variance(x, batch_size) for x in points])
    design = np.column_stack([gaps, np.ones_like(gaps)])
    (c0, sigma_sq), *_ = np.linalg.lstsq(design, variances, rcond=None)
    c0 = max(float(c0), 0.0)
    sigma_sq = max(float(sigma_sq), 0.0)
    if c0 == 0.0 and sigma_sq == 0.0:
        sigma_sq = float(np.max(variances, initial=0.0))
    bounds = c0 * gaps + sigma_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bounds > 0, variances / bounds, 1.0)
    lift = max(float(np.max(ratio, initial=1.0)), 1.0)
    return ABCMeta(c0=c0 * lift, sigma=float(np.sqrt(sigma_sq * lift)))
