"""Sequence/model types and the likelihood engines.

Two forward algorithms are provided: the conditional-probability filter
(:func:`forward_conditional`), which tracks normalized state beliefs and a
cumulative log-likelihood and therefore never underflows, and the
joint-probability variant (:func:`forward_joint_log`), kept fully on the
log scale as an independent cross-check.  The backward smoother turns a
forward pass into pairwise and marginal posteriors for EM, and
:func:`loglik_with_gradient` runs the same filter over dual numbers to get
exact parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .dual import partials_of, seed, value_of


class NumericalUnderflow(ArithmeticError):
    """Total emission mass hit zero: the sequence is impossible under theta."""

    def __init__(self, position: int):
        super().__init__(f"zero emission mass at position {position}")
        self.position = position


class DegeneratePosterior(ArithmeticError):
    """Backward pass asked to divide posterior mass by a zero forecast."""

    def __init__(self, position: int):
        super().__init__(f"inconsistent forward quantities at position {position}")
        self.position = position


@dataclass
class ObsSequence:
    """One observation sequence.

    ``observations`` holds model-defined codes (small ints for discrete
    alphabets, real values for continuous emissions).  ``positions`` are
    genetic-map coordinates in centiMorgan, strictly increasing, used by
    distance-dependent transition models; ``freq_a`` carries a per-position
    reference-allele frequency for the genotype emission model.
    ``missing_code`` marks the code treated as unobserved (emission weight
    one in every state).
    """

    observations: np.ndarray
    positions: np.ndarray | None = None
    freq_a: np.ndarray | None = None
    hidden_truth: np.ndarray | None = None
    missing_code: int | None = None

    def __post_init__(self):
        self.observations = np.asarray(self.observations)
        if self.observations.ndim != 1 or self.observations.size < 1:
            raise ValueError("observations must be a non-empty 1-d array")
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=float)
            if self.positions.shape != self.observations.shape:
                raise ValueError("positions must match observations in length")
            if np.any(np.diff(self.positions) <= 0):
                raise ValueError("positions must be strictly increasing")
        if self.freq_a is not None:
            self.freq_a = np.asarray(self.freq_a, dtype=float)
            if self.freq_a.shape != self.observations.shape:
                raise ValueError("freq_a must match observations in length")
        if self.hidden_truth is not None:
            self.hidden_truth = np.asarray(self.hidden_truth)

    def __len__(self) -> int:
        return self.observations.size


@dataclass
class ParamVector:
    """Parameter values with per-coordinate box bounds."""

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not (self.values.shape == self.lower.shape == self.upper.shape):
            raise ValueError("values and bounds must share one shape")
        if np.any(self.lower >= self.upper):
            raise ValueError("each lower bound must lie strictly below its upper bound")
        if np.any(self.values < self.lower) or np.any(self.values > self.upper):
            raise ValueError("values violate the box bounds")

    def clipped(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lower, self.upper)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=float), self.lower, self.upper)


@dataclass
class ModelSpec:
    """A parametric HMM: distributions as functions of the parameter vector.

    The three builders accept the parameter vector either as a float array
    or as a list of duals (see :mod:`hmmopt.dual`), so one definition
    serves both the plain and the derivative-carrying forward pass.
    ``transition_matrices`` may return a single row-stochastic matrix or a
    stack of per-step matrices for distance-dependent chains.  ``m_step``
    re-estimates the parameters from posteriors; it receives the current
    iterate so degenerate posteriors and warm-started numeric maximization
    have a fallback.
    """

    name: str
    n_states: int
    param_dim: int
    param_names: tuple
    initial_distribution: Callable
    transition_matrices: Callable
    emission_weights: Callable
    m_step: Callable
    em_lower: np.ndarray
    em_upper: np.ndarray
    qn_lower: np.ndarray
    qn_upper: np.ndarray
    start_sampler: Callable
    state_names: tuple = ()
    alphabet: dict = field(default_factory=dict)
    missing_code: int | None = None

    def bounds(self, family: str) -> ParamVector:
        """Box for an optimizer family ('em' or 'qn'), centered start values."""
        lo, up = (self.em_lower, self.em_upper) if family == "em" else (self.qn_lower, self.qn_upper)
        mid = np.where(np.isfinite(up), (lo + up) / 2.0, lo + 1.0)
        return ParamVector(mid, lo, up)

    def param_vector(self, values, family: str = "qn") -> ParamVector:
        lo, up = (self.em_lower, self.em_upper) if family == "em" else (self.qn_lower, self.qn_upper)
        return ParamVector(np.asarray(values, dtype=float), lo, up)


@dataclass
class ForwardResult:
    """Forecast/filtering probabilities and the log-likelihood trace."""

    alpha: np.ndarray
    beta: np.ndarray
    loglik: float
    gamma_trace: np.ndarray | None = None


@dataclass
class PosteriorSet:
    """Smoothed posteriors: ``delta[k]`` couples positions (k, k+1)."""

    delta: np.ndarray
    phi: np.ndarray


def _build_matrices(model: ModelSpec, theta, seq: ObsSequence):
    pi = np.ascontiguousarray(value_of(model.initial_distribution(theta)), dtype=float)
    T = np.ascontiguousarray(value_of(model.transition_matrices(theta, seq)), dtype=float)
    W = np.ascontiguousarray(value_of(model.emission_weights(theta, seq)), dtype=float)
    return pi, T, W


def forward_conditional(model: ModelSpec, theta, seq: ObsSequence) -> ForwardResult:
    """Run the conditional-probability forward pass.

    Raises :class:`NumericalUnderflow` when some observation has zero
    probability under ``theta`` in every reachable state; callers that
    want a value instead should treat the likelihood as ``-inf``.
    """
    pi, T, W = _build_matrices(model, theta, seq)
    if T.ndim == 2:
        alpha, beta, gamma, status = _kernels.forward_filter(pi, T, W)
    else:
        alpha, beta, gamma, status = _kernels.forward_filter_steps(pi, T, W)
    if status >= 0:
        raise NumericalUnderflow(status)
    return ForwardResult(alpha=alpha, beta=beta, loglik=float(gamma[-1]), gamma_trace=gamma)


def forward_joint_log(model: ModelSpec, theta, seq: ObsSequence) -> float:
    """Joint-probability forward pass, carried entirely on the log scale.

    Independent of :func:`forward_conditional` (different recursion,
    log-sum-exp arithmetic); returns ``-inf`` for an impossible sequence.
    """
    pi, T, W = _build_matrices(model, theta, seq)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_T = np.log(T)
        log_W = np.log(W)
    lb = log_pi + log_W[0]
    L = len(seq)
    for i in range(1, L):
        step_T = log_T if log_T.ndim == 2 else log_T[i - 1]
        la = logsumexp(lb[:, None] + step_T, axis=0)
        lb = la + log_W[i]
    return float(logsumexp(lb))


def backward(model: ModelSpec, theta, seq: ObsSequence, fw: ForwardResult) -> PosteriorSet:
    """Backward smoother over a forward pass from the same model/theta/seq."""
    T = np.ascontiguousarray(value_of(model.transition_matrices(theta, seq)), dtype=float)
    if T.ndim == 2:
        delta, phi, status = _kernels.backward_smooth(T, fw.alpha, fw.beta)
    else:
        delta, phi, status = _kernels.backward_smooth_steps(T, fw.alpha, fw.beta)
    if status >= 0:
        raise DegeneratePosterior(status)
    return PosteriorSet(delta=delta, phi=phi)


def forward_with_gradient(model: ModelSpec, theta, seq: ObsSequence):
    """Forward pass over dual numbers: (ForwardResult, gradient of loglik).

    The value fields match :func:`forward_conditional` exactly (identical
    operation order), so the result doubles as the E-step forward.
    """
    theta = np.asarray(theta, dtype=float)
    P = theta.size
    duals = seed(theta)
    pi_d = model.initial_distribution(duals)
    T_d = model.transition_matrices(duals, seq)
    W_d = model.emission_weights(duals, seq)
    pi = np.ascontiguousarray(value_of(pi_d), dtype=float)
    T = np.ascontiguousarray(value_of(T_d), dtype=float)
    W = np.ascontiguousarray(value_of(W_d), dtype=float)
    dpi = np.ascontiguousarray(partials_of(pi_d, P), dtype=float)
    dT = np.ascontiguousarray(partials_of(T_d, P), dtype=float)
    dW = np.ascontiguousarray(partials_of(W_d, P), dtype=float)
    if dpi.shape != pi.shape + (P,):
        dpi = np.broadcast_to(dpi, pi.shape + (P,)).copy()
    if dT.shape != T.shape + (P,):
        dT = np.broadcast_to(dT, T.shape + (P,)).copy()
    if dW.shape != W.shape + (P,):
        dW = np.broadcast_to(dW, W.shape + (P,)).copy()
    if T.ndim == 2:
        alpha, beta, gamma, grad, status = _kernels.forward_filter_grad(pi, dpi, T, dT, W, dW)
    else:
        alpha, beta, gamma, grad, status = _kernels.forward_filter_grad_steps(pi, dpi, T, dT, W, dW)
    if status >= 0:
        raise NumericalUnderflow(status)
    fw = ForwardResult(alpha=alpha, beta=beta, loglik=float(gamma[-1]), gamma_trace=gamma)
    return fw, grad


def loglik_with_gradient(model: ModelSpec, theta, seq: ObsSequence):
    """Log-likelihood and its gradient; ``(-inf, None)`` when impossible."""
    try:
        fw, grad = forward_with_gradient(model, theta, seq)
    except NumericalUnderflow:
        return -np.inf, None
    return fw.loglik, grad


def q_value(model: ModelSpec, theta, seq: ObsSequence, post: PosteriorSet) -> float:
    """Expected complete-data log-likelihood under the given posteriors.

    The direct objective of the M-step: initial, transition, and emission
    terms weighted by ``phi``/``delta``, with the 0*log(0) = 0 convention
    so structural zeros with zero posterior mass contribute nothing.
    """
    pi, T, W = _build_matrices(model, theta, seq)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
        log_T = np.log(T)
        log_W = np.log(W)
    phi1 = post.phi[0]
    total = float(np.sum(np.where(phi1 > 0, phi1 * log_pi, 0.0)))
    if T.ndim == 2:
        D = post.delta.sum(axis=0)
        total += float(np.sum(np.where(D > 0, D * log_T, 0.0)))
    else:
        total += float(np.sum(np.where(post.delta > 0, post.delta * log_T, 0.0)))
    total += float(np.sum(np.where(post.phi > 0, post.phi * log_W, 0.0)))
    return total
