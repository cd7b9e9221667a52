"""Independent reference computations used by the test suite.

Nothing here calls the Bellman code under test; the sampling drivers only call
the per-sample update rules whose fixed point is being checked.
"""

import numpy as np
from numba import njit

from robustlab.tabular import arq_update, robust_q_update


def classic_value_iteration(kernel, cost, gamma, tol=1e-12, max_iters=1_000_000):
    """Plain cost-minimising value iteration, written out state by state."""
    n_s, n_a, _ = kernel.shape
    v = np.zeros(n_s)
    for _ in range(max_iters):
        q = np.empty((n_s, n_a))
        for s in range(n_s):
            for a in range(n_a):
                q[s, a] = cost[s, a] + gamma * sum(kernel[s, a, t] * v[t] for t in range(n_s) if kernel[s, a, t] > 0)
        new_v = q.min(axis=1)
        if np.max(np.abs(new_v - v)) < tol:
            return q
        v = new_v
    raise RuntimeError("classic value iteration did not converge")


def two_state_fixed_point(c0, c1, gamma, R, p_stay=1.0):
    """Analytic fixed point of the 2-state, 1-action MDP whose neighbour sets are ``{s}``.

    The contamination term then evaluates V(s) itself, so each equation is
    ``V = c + gamma (1-R) p.V + gamma R V(s)``; solved as a 2x2 linear system.
    """
    p = np.array([[p_stay, 1 - p_stay], [1 - p_stay, p_stay]])
    a = np.eye(2) - gamma * (1 - R) * p - gamma * R * np.eye(2)
    return np.linalg.solve(a, np.array([c0, c1]))


@njit(cache=True)
def _generative_arq(q, cum, cost, nbr, nbr_len, gamma, R, rounds, seed):
    np.random.seed(seed)
    n_s, n_a = cost.shape
    for k in range(rounds):
        alpha = 1.0 / (1.0 + (1.0 - gamma) * k)
        for s in range(n_s):
            for a in range(n_a):
                u = np.random.random() * cum[s, a, n_s - 1]
                s2 = np.searchsorted(cum[s, a], u, side="right")
                if s2 >= n_s:
                    s2 = n_s - 1
                arq_update(q, s, a, cost[s, a], s2, nbr[s, : nbr_len[s]], alpha, gamma, R, False)
    return q


@njit(cache=True)
def _generative_robust_q(q, cum, cost, gamma, R, rounds, seed):
    np.random.seed(seed)
    n_s, n_a = cost.shape
    for k in range(rounds):
        alpha = 1.0 / (1.0 + (1.0 - gamma) * k)
        for s in range(n_s):
            for a in range(n_a):
                u = np.random.random() * cum[s, a, n_s - 1]
                s2 = np.searchsorted(cum[s, a], u, side="right")
                if s2 >= n_s:
                    s2 = n_s - 1
                robust_q_update(q, s, a, cost[s, a], s2, alpha, gamma, R, False)
    return q


def generative_learning(mdp, algorithm, R, rounds, seed, neighbors=None):
    """Synchronous sampling: every (s, a) gets one fresh successor per round.

    Step size ``1 / (1 + (1 - gamma) k)`` decays like ``1/k`` with the
    rescaling that avoids the slow ``1/k`` bias for discounts near one.
    """
    cum = np.cumsum(mdp.kernel, axis=2)
    q = np.zeros_like(mdp.cost)
    if algorithm == "arq":
        n_s = mdp.n_states
        nbr = np.zeros((n_s, n_s), dtype=np.int64)
        nbr_len = np.zeros(n_s, dtype=np.int64)
        for s in range(n_s):
            ns = neighbors.get(s)
            nbr[s, : len(ns)] = ns
            nbr_len[s] = len(ns)
        return _generative_arq(q, cum, mdp.cost, nbr, nbr_len, mdp.gamma, R, rounds, seed)
    return _generative_robust_q(q, cum, mdp.cost, mdp.gamma, R, rounds, seed)
