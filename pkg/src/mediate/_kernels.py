"""Compiled single-observation forward pass used at action time."""

import numba
import numpy as np


@numba.njit(cache=True)
def _mlp(theta, offset, sizes, x):
    """ELU layers stored as row-major ``W`` then ``b``. Returns the last
    activation and the offset after the block."""
    h = x.copy()
    for layer in range(sizes.shape[0] - 1):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        out = theta[offset + n_in * n_out : offset + n_in * n_out + n_out].copy()
        for i in range(n_in):
            hi = h[i]
            if hi != 0.0:
                base = offset + i * n_out
                for j in range(n_out):
                    out[j] += hi * theta[base + j]
        for j in range(n_out):
            if out[j] < 0.0:
                out[j] = np.expm1(out[j])
        offset += n_in * n_out + n_out
        h = out
    return h, offset


@numba.njit(cache=True)
def act_kernel(theta, sizes, n_actions, x, u, shared):
    """Forward ``x`` through both heads, then sample an action by inverse CDF
    with the uniform draw ``u``. Returns ``(action, value)``.

    Layout: actor trunk, actor head, then (unless ``shared``) the critic
    trunk, then the critic head.
    """
    h, offset = _mlp(theta, 0, sizes, x)
    hidden = sizes[sizes.shape[0] - 1]
    logits = theta[offset + hidden * n_actions : offset + hidden * n_actions + n_actions].copy()
    for i in range(hidden):
        hi = h[i]
        base = offset + i * n_actions
        for j in range(n_actions):
            logits[j] += hi * theta[base + j]
    offset += hidden * n_actions + n_actions
    if not shared:
        h, offset = _mlp(theta, offset, sizes, x)
    value = theta[offset + hidden]
    for i in range(hidden):
        value += h[i] * theta[offset + i]
    top = logits.max()
    total = 0.0
    for j in range(n_actions):
        logits[j] = np.exp(logits[j] - top)
        total += logits[j]
    threshold = u * total
    acc = 0.0
    for j in range(n_actions - 1):
        acc += logits[j]
        if threshold < acc:
            return j, value
    return n_actions - 1, value
