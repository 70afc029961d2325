"""Sequential recursion kernels, jitted with numba.

The per-position recursions are the hot path of every optimizer run; they
are written as explicit loops over states (and partial-derivative slots)
so numba compiles them to tight native code.  Model-specific structure
stays outside: callers pass the initial distribution, transition matrix
(one shared matrix, or one per step), and the per-position emission-weight
matrix, plus their partials for the derivative variants.

Status convention: kernels return ``status == -1`` on success, otherwise
the 0-based position where the recursion broke down (zero total emission
mass in the forward pass, inconsistent forward quantities in the backward
pass).  Exceptions are raised by the callers in :mod:`hmmopt.core`.

The derivative kernels compute values in exactly the same operation order
as the plain kernels, so the value parts agree bit for bit.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def forward_filter(pi, T, W):
    """Conditional forward pass with a single shared transition matrix.

    Returns (alpha, beta, gamma, status): forecast and filtering
    probabilities per position, cumulative log-likelihood trace, and the
    underflow status.
    """
    L, S = W.shape
    alpha = np.empty((L, S))
    beta = np.empty((L, S))
    gamma = np.empty(L)
    acc = 0.0
    for s in range(S):
        alpha[0, s] = pi[s]
    for i in range(L):
        if i > 0:
            for s in range(S):
                a = 0.0
                for t in range(S):
                    a += beta[i - 1, t] * T[t, s]
                alpha[i, s] = a
        c = 0.0
        for s in range(S):
            c += W[i, s] * alpha[i, s]
        if c <= 0.0:
            return alpha, beta, gamma, i
        for s in range(S):
            beta[i, s] = W[i, s] * alpha[i, s] / c
        acc += np.log(c)
        gamma[i] = acc
    return alpha, beta, gamma, -1


@njit(cache=True)
def forward_filter_steps(pi, Tstack, W):
    """Conditional forward pass with one transition matrix per step."""
    L, S = W.shape
    alpha = np.empty((L, S))
    beta = np.empty((L, S))
    gamma = np.empty(L)
    acc = 0.0
    for s in range(S):
        alpha[0, s] = pi[s]
    for i in range(L):
        if i > 0:
            for s in range(S):
                a = 0.0
                for t in range(S):
                    a += beta[i - 1, t] * Tstack[i - 1, t, s]
                alpha[i, s] = a
        c = 0.0
        for s in range(S):
            c += W[i, s] * alpha[i, s]
        if c <= 0.0:
            return alpha, beta, gamma, i
        for s in range(S):
            beta[i, s] = W[i, s] * alpha[i, s] / c
        acc += np.log(c)
        gamma[i] = acc
    return alpha, beta, gamma, -1


@njit(cache=True)
def backward_smooth(T, alpha, beta):
    """Backward smoother: pairwise posteriors delta and marginals phi.

    ``delta[k, s, t]`` is the posterior probability of the state pair at
    positions (k, k+1); ``phi[k, s]`` the posterior at position k.
    """
    L, S = alpha.shape
    delta = np.empty((L - 1, S, S))
    phi = np.empty((L, S))
    for s in range(S):
        phi[L - 1, s] = beta[L - 1, s]
    for k in range(L - 2, -1, -1):
        for s in range(S):
            acc = 0.0
            for t in range(S):
                num = T[s, t] * beta[k, s] * phi[k + 1, t]
                a = alpha[k + 1, t]
                if a > 0.0:
                    d = num / a
                elif num > 0.0:
                    return delta, phi, k + 1
                else:
                    d = 0.0
                delta[k, s, t] = d
                acc += d
            phi[k, s] = acc
    return delta, phi, -1


@njit(cache=True)
def backward_smooth_steps(Tstack, alpha, beta):
    """Backward smoother with one transition matrix per step."""
    L, S = alpha.shape
    delta = np.empty((L - 1, S, S))
    phi = np.empty((L, S))
    for s in range(S):
        phi[L - 1, s] = beta[L - 1, s]
    for k in range(L - 2, -1, -1):
        for s in range(S):
            acc = 0.0
            for t in range(S):
                num = Tstack[k, s, t] * beta[k, s] * phi[k + 1, t]
                a = alpha[k + 1, t]
                if a > 0.0:
                    d = num / a
                elif num > 0.0:
                    return delta, phi, k + 1
                else:
                    d = 0.0
                delta[k, s, t] = d
                acc += d
            phi[k, s] = acc
    return delta, phi, -1


@njit(cache=True)
def forward_filter_grad(pi, dpi, T, dT, W, dW):
    """Conditional forward pass carrying partial derivatives.

    Partial arrays hold derivatives with respect to P parameter
    coordinates in a trailing axis.  Returns (alpha, beta, gamma, grad,
    status) where grad is the gradient of the final log-likelihood.
    """
    L, S = W.shape
    P = dpi.shape[-1]
    alpha = np.empty((L, S))
    beta = np.empty((L, S))
    gamma = np.empty(L)
    da = np.empty((S, P))
    db = np.empty((S, P))
    da_next = np.empty((S, P))
    grad = np.zeros(P)
    acc = 0.0
    for s in range(S):
        alpha[0, s] = pi[s]
        for p in range(P):
            da[s, p] = dpi[s, p]
    for i in range(L):
        if i > 0:
            for s in range(S):
                a = 0.0
                for t in range(S):
                    a += beta[i - 1, t] * T[t, s]
                alpha[i, s] = a
                for p in range(P):
                    g = 0.0
                    for t in range(S):
                        g += db[t, p] * T[t, s] + beta[i - 1, t] * dT[t, s, p]
                    da_next[s, p] = g
            for s in range(S):
                for p in range(P):
                    da[s, p] = da_next[s, p]
        c = 0.0
        for s in range(S):
            c += W[i, s] * alpha[i, s]
        if c <= 0.0:
            return alpha, beta, gamma, grad, i
        dc = np.zeros(P)
        for s in range(S):
            for p in range(P):
                dc[p] += dW[i, s, p] * alpha[i, s] + W[i, s] * da[s, p]
        for s in range(S):
            u = W[i, s] * alpha[i, s]
            beta[i, s] = u / c
            for p in range(P):
                du = dW[i, s, p] * alpha[i, s] + W[i, s] * da[s, p]
                db[s, p] = (du - beta[i, s] * dc[p]) / c
        acc += np.log(c)
        gamma[i] = acc
        for p in range(P):
            grad[p] += dc[p] / c
    return alpha, beta, gamma, grad, -1


@njit(cache=True)
def forward_filter_grad_steps(pi, dpi, Tstack, dTstack, W, dW):
    """Derivative-carrying forward pass with per-step transitions."""
    L, S = W.shape
    P = dpi.shape[-1]
    alpha = np.empty((L, S))
    beta = np.empty((L, S))
    gamma = np.empty(L)
    da = np.empty((S, P))
    db = np.empty((S, P))
    da_next = np.empty((S, P))
    grad = np.zeros(P)
    acc = 0.0
    for s in range(S):
        alpha[0, s] = pi[s]
        for p in range(P):
            da[s, p] = dpi[s, p]
    for i in range(L):
        if i > 0:
            for s in range(S):
                a = 0.0
                for t in range(S):
                    a += beta[i - 1, t] * Tstack[i - 1, t, s]
                alpha[i, s] = a
                for p in range(P):
                    g = 0.0
                    for t in range(S):
                        g += db[t, p] * Tstack[i - 1, t, s] + beta[i - 1, t] * dTstack[i - 1, t, s, p]
                    da_next[s, p] = g
            for s in range(S):
                for p in range(P):
                    da[s, p] = da_next[s, p]
        c = 0.0
        for s in range(S):
            c += W[i, s] * alpha[i, s]
        if c <= 0.0:
            return alpha, beta, gamma, grad, i
        dc = np.zeros(P)
        for s in range(S):
            for p in range(P):
                dc[p] += dW[i, s, p] * alpha[i, s] + W[i, s] * da[s, p]
        for s in range(S):
            u = W[i, s] * alpha[i, s]
            beta[i, s] = u / c
            for p in range(P):
                du = dW[i, s, p] * alpha[i, s] + W[i, s] * da[s, p]
                db[s, p] = (du - beta[i, s] * dc[p]) / c
        acc += np.log(c)
        gamma[i] = acc
        for p in range(P):
            grad[p] += dc[p] / c
    return alpha, beta, gamma, grad, -1
