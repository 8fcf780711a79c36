"""Independent scalar reference for the actor-critic loss, used as a
finite-difference oracle. Shares no code with the learner."""

import math


def _read_trunk(theta, k, dims):
    params = []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        W = [[theta[k + i * n_out + j] for j in range(n_out)] for i in range(n_in)]
        k += n_in * n_out
        b = [theta[k + j] for j in range(n_out)]
        k += n_out
        params.append((W, b))
    return params, k


def _unflatten(theta, sizes, n_actions, shared):
    dims = list(sizes)
    trunk, k = _read_trunk(theta, 0, dims)
    h = dims[-1]
    Wa = [[theta[k + i * n_actions + j] for j in range(n_actions)] for i in range(h)]
    k += h * n_actions
    ba = [theta[k + j] for j in range(n_actions)]
    k += n_actions
    vtrunk = trunk
    if not shared:
        vtrunk, k = _read_trunk(theta, k, dims)
    Wv = [theta[k + i] for i in range(h)]
    k += h
    bv = theta[k]
    assert k + 1 == len(theta)
    return trunk, (Wa, ba), vtrunk, (Wv, bv)


def _elu(x):
    return x if x > 0 else math.expm1(x)


def _run(x, trunk):
    h = list(x)
    for W, b in trunk:
        h = [_elu(sum(h[i] * W[i][j] for i in range(len(h))) + b[j]) for j in range(len(b))]
    return h


def forward(theta, sizes, n_actions, x, shared=False):
    trunk, (Wa, ba), vtrunk, (Wv, bv) = _unflatten(theta, sizes, n_actions, shared)
    h = _run(x, trunk)
    logits = [sum(h[i] * Wa[i][j] for i in range(len(h))) + ba[j] for j in range(n_actions)]
    top = max(logits)
    exps = [math.exp(l - top) for l in logits]
    z = sum(exps)
    probs = [e / z for e in exps]
    h = _run(x, vtrunk)
    value = sum(h[i] * Wv[i] for i in range(len(h))) + bv
    return probs, value


def surrogate_loss(theta, sizes, n_actions, obs, actions, deltas, targets, entropy_coef=0.0, shared=False):
    """-sum delta*log pi(a) + sum (target - V)^2 - c * sum H(pi) with deltas
    and targets frozen."""
    loss = 0.0
    for t, a in enumerate(actions):
        probs, value = forward(theta, sizes, n_actions, obs[t], shared)
        loss -= deltas[t] * math.log(probs[a])
        loss += (targets[t] - value) ** 2
        if entropy_coef:
            loss += entropy_coef * sum(p * math.log(p) for p in probs)
    return loss


def frozen_terms(theta, sizes, n_actions, obs, rewards, gamma, shared=False):
    values = [forward(theta, sizes, n_actions, o, shared)[1] for o in obs]
    targets = [rewards[t] + gamma * values[t + 1] for t in range(len(rewards))]
    deltas = [targets[t] - values[t] for t in range(len(rewards))]
    return deltas, targets


def numeric_gradient(theta, sizes, n_actions, obs, actions, rewards, gamma, entropy_coef=0.0, eps=1e-6, shared=False):
    deltas, targets = frozen_terms(theta, sizes, n_actions, obs, rewards, gamma, shared)
    grad = []
    for k in range(len(theta)):
        up = list(theta)
        dn = list(theta)
        up[k] += eps
        dn[k] -= eps
        f_up = surrogate_loss(up, sizes, n_actions, obs, actions, deltas, targets, entropy_coef, shared)
        f_dn = surrogate_loss(dn, sizes, n_actions, obs, actions, deltas, targets, entropy_coef, shared)
        grad.append((f_up - f_dn) / (2 * eps))
    return grad
