"""Independent brute-force oracles for the numeric kernels under test.

Everything here is written as plainly as possible (python loops, float64,
no shared code with the package) so that agreement is meaningful.
"""

import math

import numpy as np


def iqm_oracle(values, trim=0.25):
    """Trimmed mean via the textbook g/fraction formulation."""
    x = sorted(float(v) for v in values)
    n = len(x)
    cut = trim * n
    g = int(math.floor(cut))
    frac = cut - g
    weights = [1.0] * n
    for i in range(g):
        weights[i] = 0.0
        weights[n - 1 - i] = 0.0
    if frac > 0:
        weights[g] -= frac
        weights[n - 1 - g] -= frac
    total = sum(w * v for w, v in zip(weights, x))
    return total / sum(weights)


def infonce_oracle(y, q_pos, hard=None, reduction="mean"):
    """Enumerated contrastive loss.

    Anchor b is scored against every positive q_pos[b'] plus (optionally) its
    own hard negative hard[b]. No other pairings enter the denominator.
    """
    y = np.asarray(y, dtype=np.float64)
    q_pos = np.asarray(q_pos, dtype=np.float64)
    B = y.shape[0]
    total = 0.0
    for b in range(B):
        pos = math.exp(float(np.dot(y[b], q_pos[b])))
        denom = sum(math.exp(float(np.dot(y[b], q_pos[b2]))) for b2 in range(B))
        if hard is not None:
            denom += math.exp(float(np.dot(y[b], np.asarray(hard, dtype=np.float64)[b])))
        total += -math.log(pos / denom)
    return total / B if reduction == "mean" else total


def spr_oracle(y, q, reduction="mean"):
    """Enumerated multi-step contrastive loss.

    y, q: (B, K, D). Anchor (b, k) is positive with q[b, k]; the denominator
    runs over all (b', k') candidates, the positive included.
    """
    y = np.asarray(y, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    B, K, _ = y.shape
    total = 0.0
    for b in range(B):
        for k in range(K):
            pos = math.exp(float(np.dot(y[b, k], q[b, k])))
            denom = 0.0
            for b2 in range(B):
                for k2 in range(K):
                    denom += math.exp(float(np.dot(y[b, k], q[b2, k2])))
            total += -math.log(pos / denom)
    return total / (B * K) if reduction == "mean" else total


def categorical_projection_oracle(probs, values, support):
    """Project mass `probs` at positions `values` onto the atom grid, per sample."""
    probs = np.asarray(probs, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    support = np.asarray(support, dtype=np.float64)
    vmin, vmax = support[0], support[-1]
    delta = (vmax - vmin) / (len(support) - 1)
    out = np.zeros((probs.shape[0], len(support)))
    for b in range(probs.shape[0]):
        for j in range(probs.shape[1]):
            v = min(max(values[b, j], vmin), vmax)
            pos = (v - vmin) / delta
            lo = int(math.floor(pos))
            hi = int(math.ceil(pos))
            if lo == hi:
                out[b, lo] += probs[b, j]
            else:
                out[b, lo] += probs[b, j] * (hi - pos)
                out[b, hi] += probs[b, j] * (pos - lo)
    return out


def returns_to_go_oracle(rewards, gamma=1.0):
    out = [0.0] * len(rewards)
    acc = 0.0
    for i in reversed(range(len(rewards))):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def value_iteration(transition, reward, horizon, start_state):
    """Optimal undiscounted return of a deterministic finite-horizon MDP.

    transition[s][a] -> s', reward[s][a] -> r. Returns (optimal return from
    start_state, greedy action table indexed [t][s]).
    """
    n_states = len(transition)
    n_actions = len(transition[0])
    v = [0.0] * n_states
    policy = []
    for _ in range(horizon):
        v_new = [0.0] * n_states
        step_policy = [0] * n_states
        for s in range(n_states):
            best, best_a = -math.inf, 0
            for a in range(n_actions):
                val = reward[s][a] + v[transition[s][a]]
                if val > best:
                    best, best_a = val, a
            v_new[s] = best
            step_policy[s] = best_a
        v = v_new
        policy.append(step_policy)
    # policy[t] is the greedy table with (horizon - t) steps remaining, so
    # reverse it to index by elapsed time from the start.
    policy.reverse()
    return v[start_state], policy
