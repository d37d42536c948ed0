"""Hot inner loops with a numba fast path and a pure-numpy fallback.

The per-iteration cost of a simulated run is dominated by evaluating one
minibatch gradient per agent. For the tanh classification loss that loop is
compiled with numba when available; set ``PROXNET_PURE_NUMPY=1`` to force the
vectorized numpy path (used automatically when numba is not importable).
``benchmarks/bench_kernels.py`` compares the two paths.

Both paths consume the same stacked layout: all agents' samples concatenated
into one (N_total, d) feature block with an offsets vector delimiting agents,
and a (n, B) block of batch indices local to each agent.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("PROXNET_PURE_NUMPY", "").strip().lower() in ("1", "true", "yes")

try:
    if _FORCE_NUMPY:
        raise ImportError("pure-numpy path forced by PROXNET_PURE_NUMPY")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def tanh_minibatch_grads_numpy(features, labels, offsets, batch_idx, x_stack, out):
    """Fill ``out[i]`` with agent i's minibatch tanh-loss gradient at ``x_stack[i]``.

    gradient = -(1/B) sum_j (1 - tanh^2(b_j a_j.x)) b_j a_j over the batch.
    """
    n, batch = batch_idx.shape
    rows = (offsets[:-1, None] + batch_idx).ravel()
    feats = features[rows].reshape(n, batch, -1)
    labs = labels[rows].reshape(n, batch)
    margins = np.einsum("nbd,nd->nb", feats, x_stack) * labs
    coeff = (1.0 - np.tanh(margins) ** 2) * labs
    np.einsum("nb,nbd->nd", coeff, feats, out=out)
    out *= -1.0 / batch
    return out


if HAVE_NUMBA:

    @njit(cache=True, fastmath=True)
    def _tanh_minibatch_grads_numba(features, labels, offsets, batch_idx, x_stack, out):
        n, batch = batch_idx.shape
        d = features.shape[1]
        for i in range(n):
            base = offsets[i]
            for c in range(d):
                out[i, c] = 0.0
            for b in range(batch):
                row = base + batch_idx[i, b]
                m = 0.0
                for c in range(d):
                    m += features[row, c] * x_stack[i, c]
                m *= labels[row]
                th = np.tanh(m)
                coeff = (1.0 - th * th) * labels[row]
                for c in range(d):
                    out[i, c] += coeff * features[row, c]
            for c in range(d):
                out[i, c] *= -1.0 / batch
        return out

    tanh_minibatch_grads = _tanh_minibatch_grads_numba
else:
    tanh_minibatch_grads = tanh_minibatch_grads_numpy


def stack_tanh_data(objectives):
    """Concatenate per-agent datasets into the kernel layout.

    Returns (features (N_total, d) C-contiguous, labels (N_total,), offsets
    (n+1,) int64).
    """
    feats = np.ascontiguousarray(np.vstack([o.features for o in objectives]))
    labs = np.concatenate([o.labels.astype(np.float64) for o in objectives])
    sizes = np.array([o.features.shape[0] for o in objectives], dtype=np.int64)
    offsets = np.zeros(len(objectives) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    return feats, labs, offsets
