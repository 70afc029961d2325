"""The four worked models: weather/umbrella, geyser (binary and
continuous), and HBD-segment genotypes.

Each factory returns a :class:`hmmopt.core.ModelSpec` whose distribution
builders work on plain floats and on dual numbers alike, plus the M-step
and start sampler the optimizers need.  Parameter boxes come in two
flavours per model: the natural (EM) box and the narrowed quasi-Newton
box, since the likelihood may be undefined or unbounded on the natural
boundary.
"""

from __future__ import annotations

import math

import numpy as np

from . import dual
from .core import ModelSpec, ObsSequence, PosteriorSet


class MissingPositions(ValueError):
    """The distance-dependent model needs genetic positions on the sequence."""


def stationary_distribution(T: np.ndarray) -> np.ndarray:
    """Stationary law of a row-stochastic matrix via the linear system pi T = pi."""
    S = T.shape[0]
    A = np.vstack([T.T - np.eye(S), np.ones(S)])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.clip(pi, 0.0, None) / np.sum(np.clip(pi, 0.0, None))


def _golden_max(fun, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 120):
    """Golden-section maximization of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def _xlogy(w, x):
    """w * log(x) with the 0 * log(0) = 0 convention."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(w > 0, w * np.log(x), 0.0)
    return float(np.sum(out))


# ---------------------------------------------------------------------------
# umbrella


def _umbrella_transition(theta, seq):
    a = theta[0]
    return dual.array([[1 - a, a], [a, 1 - a]])


def _umbrella_emissions(theta, seq):
    b = theta[1]
    table = dual.array([[1 - b, b], [b, 1 - b], [1.0, 1.0]])
    return table[np.asarray(seq.observations, dtype=int)]


def _umbrella_m_step(seq: ObsSequence, post: PosteriorSet, theta_old):
    codes = np.asarray(seq.observations, dtype=int)
    D = post.delta.sum(axis=0)
    n_steps = len(seq) - 1
    a = (D[0, 1] + D[1, 0]) / n_steps if n_steps > 0 else theta_old[0]
    observed = codes != 2
    n_obs = int(observed.sum())
    if n_obs > 0:
        # mass on (state D, saw U) and (state R, saw N): the error events
        mismatch = np.where(codes == 1, post.phi[:, 0], post.phi[:, 1])
        b = float(mismatch[observed].sum()) / n_obs
    else:
        b = theta_old[1]
    return np.array([min(max(a, 0.0), 1.0), min(max(b, 0.0), 1.0)])


def umbrella_spec() -> ModelSpec:
    """Two-state weather chain observed through a noisy umbrella flag.

    Parameters (a, b): weather flip probability and observation error.
    Initial distribution is the uniform (and stationary) (1/2, 1/2).
    """
    return ModelSpec(
        name="umbrella",
        n_states=2,
        param_dim=2,
        param_names=("a", "b"),
        state_names=("D", "R"),
        alphabet={"N": 0, "U": 1, "NA": 2},
        missing_code=2,
        initial_distribution=lambda theta: np.array([0.5, 0.5]),
        transition_matrices=_umbrella_transition,
        emission_weights=_umbrella_emissions,
        m_step=_umbrella_m_step,
        em_lower=np.zeros(2),
        em_upper=np.ones(2),
        qn_lower=np.full(2, 0.01),
        qn_upper=np.full(2, 0.99),
        start_sampler=lambda rng: rng.uniform(0.01, 0.99, size=2),
    )


# ---------------------------------------------------------------------------
# geyser (shared chain: short / long / steady-long)


def _geyser_transition(theta, seq):
    a, b = theta[0], theta[1]
    return dual.array(
        [
            [0.0, 1 - a, a],
            [1.0, 0.0, 0.0],
            [1 - b, 0.0, b],
        ]
    )


def _geyser_initial(theta):
    a, b = theta[0], theta[1]
    if float(dual.value_of(1 - b)) < 1e-12:
        # absorbing steady-long corner: the stationary law degenerates
        return np.full(3, 1.0 / 3.0)
    pi_s = 1.0 / ((1 - a) + 1 + dual.div(a, 1 - b))
    return dual.array([pi_s, (1 - a) * pi_s, dual.div(a * pi_s, 1 - b)])


def _geyser_ab_q(a: float, b: float, D: np.ndarray, phi1: np.ndarray) -> float:
    """Initial + transition part of the expected complete log-likelihood."""
    if 1.0 - b < 1e-12:
        pi = np.full(3, 1.0 / 3.0)
    else:
        pi_s = 1.0 / ((1.0 - a) + 1.0 + a / (1.0 - b))
        pi = np.array([pi_s, (1.0 - a) * pi_s, a * pi_s / (1.0 - b)])
    T = np.array([[0.0, 1.0 - a, a], [1.0, 0.0, 0.0], [1.0 - b, 0.0, b]])
    return _xlogy(phi1, pi) + _xlogy(D, T)


def _geyser_ab_m_step(D: np.ndarray, phi1: np.ndarray, a_old: float, b_old: float):
    """Update (a, b) by count ratios, then polish against the stationary
    initial-distribution coupling so the step never decreases the
    objective (a generalized EM step)."""
    leave_s = D[0, 1] + D[0, 2]
    a_hat = D[0, 2] / leave_s if leave_s > 1e-300 else a_old
    leave_sl = D[2, 0] + D[2, 2]
    b_hat = D[2, 2] / leave_sl if leave_sl > 1e-300 else b_old
    q_old = _geyser_ab_q(a_old, b_old, D, phi1)
    q_hat = _geyser_ab_q(a_hat, b_hat, D, phi1)
    if q_hat >= q_old:
        a, b, q = a_hat, b_hat, q_hat
    else:
        a, b, q = a_old, b_old, q_old
    for _ in range(2):
        a_new, q_a = _golden_max(lambda x: _geyser_ab_q(x, b, D, phi1), 0.0, 1.0)
        if q_a > q:
            a, q = a_new, q_a
        b_new, q_b = _golden_max(lambda x: _geyser_ab_q(a, x, D, phi1), 0.0, 1.0)
        if q_b > q:
            b, q = b_new, q_b
    if q < q_old:
        return a_old, b_old
    return a, b


def _geyser_disc_emissions(theta, seq):
    c, d, e = theta[2], theta[3], theta[4]
    table = dual.array([[1 - c, 1 - d, 1 - e], [c, d, e], [1.0, 1.0, 1.0]])
    return table[np.asarray(seq.observations, dtype=int)]


def _geyser_disc_m_step(seq: ObsSequence, post: PosteriorSet, theta_old):
    codes = np.asarray(seq.observations, dtype=int)
    D = post.delta.sum(axis=0)
    a, b = _geyser_ab_m_step(D, post.phi[0], theta_old[0], theta_old[1])
    observed = codes != 2
    long_obs = codes == 1
    out = np.array([a, b, theta_old[2], theta_old[3], theta_old[4]])
    for s in range(3):
        den = float(post.phi[observed, s].sum())
        if den > 1e-300:
            out[2 + s] = float(post.phi[observed & long_obs, s].sum()) / den
    return np.clip(out, 0.0, 1.0)


def geyser_disc_spec() -> ModelSpec:
    """Three-state eruption chain with dichotomised (short/long) emissions.

    Parameters (a, b, c, d, e): a = P(short -> steady-long),
    b = P(steady-long -> steady-long), and c, d, e the per-state
    probabilities of observing a long eruption.  The short -> short and
    long -> long transitions are structural zeros.  The initial
    distribution is the stationary law of the chain.
    """
    em_lower = np.zeros(5)
    em_upper = np.ones(5)
    return ModelSpec(
        name="geyser-disc",
        n_states=3,
        param_dim=5,
        param_names=("a", "b", "c", "d", "e"),
        state_names=("S", "L", "Sl"),
        alphabet={"Dinf3": 0, "Dsup3": 1, "NA": 2},
        missing_code=2,
        initial_distribution=_geyser_initial,
        transition_matrices=_geyser_transition,
        emission_weights=_geyser_disc_emissions,
        m_step=_geyser_disc_m_step,
        em_lower=em_lower,
        em_upper=em_upper,
        qn_lower=np.full(5, 0.01),
        qn_upper=np.full(5, 0.99),
        start_sampler=lambda rng: rng.uniform(0.01, 0.99, size=5),
    )


def _geyser_cont_emissions(theta, seq):
    x = np.asarray(seq.observations, dtype=float)
    cols = [dual.gaussian_pdf(x, theta[2 + s], theta[5 + s]) for s in range(3)]
    return dual.stack(cols, axis=1)


def _geyser_cont_m_step(seq: ObsSequence, post: PosteriorSet, theta_old):
    x = np.asarray(seq.observations, dtype=float)
    D = post.delta.sum(axis=0)
    a, b = _geyser_ab_m_step(D, post.phi[0], theta_old[0], theta_old[1])
    out = np.array(theta_old, dtype=float)
    out[0], out[1] = a, b
    for s in range(3):
        w = post.phi[:, s]
        wsum = float(w.sum())
        if wsum <= 1e-300:
            continue
        mu = float(w @ x) / wsum
        var = float(w @ (x - mu) ** 2) / wsum
        out[2 + s] = mu
        out[5 + s] = max(math.sqrt(var), 0.01)
    out[0] = min(max(out[0], 0.0), 1.0)
    out[1] = min(max(out[1], 0.0), 1.0)
    return out


def geyser_cont_spec() -> ModelSpec:
    """Same eruption chain with Gaussian duration emissions per state.

    Parameters (a, b, mu_s, mu_l, mu_sl, sigma_s, sigma_l, sigma_sl); the
    standard deviations are floored at 0.01 (the likelihood is unbounded
    as any sigma tends to zero).
    """
    em_lower = np.array([0.0, 0.0, -np.inf, -np.inf, -np.inf, 0.01, 0.01, 0.01])
    em_upper = np.array([1.0, 1.0, np.inf, np.inf, np.inf, np.inf, np.inf, np.inf])
    qn_lower = np.array([0.01, 0.01, -np.inf, -np.inf, -np.inf, 0.01, 0.01, 0.01])
    qn_upper = np.array([0.99, 0.99, np.inf, np.inf, np.inf, np.inf, np.inf, np.inf])

    def sample(rng):
        ab = rng.uniform(0.01, 0.99, size=2)
        mus = rng.uniform(1.0, 5.5, size=3)
        sigmas = rng.uniform(0.01, 2.0, size=3)
        return np.concatenate([ab, mus, sigmas])

    return ModelSpec(
        name="geyser-cont",
        n_states=3,
        param_dim=8,
        param_names=("a", "b", "mu_s", "mu_l", "mu_sl", "sigma_s", "sigma_l", "sigma_sl"),
        state_names=("S", "L", "Sl"),
        alphabet={},
        missing_code=None,
        initial_distribution=_geyser_initial,
        transition_matrices=_geyser_transition,
        emission_weights=_geyser_cont_emissions,
        m_step=_geyser_cont_m_step,
        em_lower=em_lower,
        em_upper=em_upper,
        qn_lower=qn_lower,
        qn_upper=qn_upper,
        start_sampler=sample,
    )


# ---------------------------------------------------------------------------
# HBD segments


def _hbd_distances(seq: ObsSequence) -> np.ndarray:
    if seq.positions is None:
        raise MissingPositions("HBD model requires genetic positions (cM)")
    return np.diff(seq.positions)


def _hbd_transition_from(f, a, d: float):
    q = dual.exp(-a * d)
    return [
        [q + (1 - q) * (1 - f), (1 - q) * f],
        [(1 - q) * (1 - f), q + (1 - q) * f],
    ]


def _hbd_transitions(theta, seq):
    f, a = theta[0], theta[1]
    d = _hbd_distances(seq)
    if d.size == 0:
        return dual.array(_hbd_transition_from(f, a, 1.0))
    if np.ptp(d) < 1e-12:
        return dual.array(_hbd_transition_from(f, a, float(d[0])))
    q = dual.exp(-a * d)
    e00 = q + (1 - q) * (1 - f)
    e01 = (1 - q) * f
    e10 = (1 - q) * (1 - f)
    e11 = q + (1 - q) * f
    row0 = dual.stack([e00, e01], axis=1)
    row1 = dual.stack([e10, e11], axis=1)
    return dual.stack([row0, row1], axis=1)


def _hbd_emissions_matrix(seq: ObsSequence, eps: float) -> np.ndarray:
    if seq.freq_a is None:
        raise ValueError("HBD model requires per-position allele frequencies")
    p = seq.freq_a
    q = 1.0 - p
    codes = np.asarray(seq.observations, dtype=int)
    by_code_nhbd = np.stack([p * p, 2.0 * p * q, q * q, np.ones_like(p)], axis=1)
    by_code_hbd = np.stack(
        [
            (1.0 - eps) * p + eps * p * p,
            2.0 * eps * p * q,
            (1.0 - eps) * q + eps * q * q,
            np.ones_like(p),
        ],
        axis=1,
    )
    idx = np.arange(codes.size)
    return np.stack([by_code_nhbd[idx, codes], by_code_hbd[idx, codes]], axis=1)


def _hbd_q_trans(f: float, a: float, d_values, D_groups, phi1) -> float:
    """Initial + transition objective for the HBD M-step, aggregated over
    the distinct inter-position distances."""
    total = _xlogy(phi1, np.array([1.0 - f, f]))
    for d, D in zip(d_values, D_groups):
        q = math.exp(-a * d)
        T = np.array(
            [
                [q + (1.0 - q) * (1.0 - f), (1.0 - q) * f],
                [(1.0 - q) * (1.0 - f), q + (1.0 - q) * f],
            ]
        )
        total += _xlogy(D, T)
    return total


def _hbd_m_step_factory(em_lower, em_upper):
    def m_step(seq: ObsSequence, post: PosteriorSet, theta_old):
        d = _hbd_distances(seq)
        uniq, inverse = np.unique(np.round(d, 12), return_inverse=True)
        D_groups = [post.delta[inverse == g].sum(axis=0) for g in range(uniq.size)]
        phi1 = post.phi[0]

        def q_of(fv, av):
            return _hbd_q_trans(fv, av, uniq, D_groups, phi1)

        f, a = float(theta_old[0]), float(theta_old[1])
        q_old = q_of(f, a)
        q = q_old
        for _ in range(3):
            f_new, q_f = _golden_max(lambda x: q_of(x, a), em_lower[0], em_upper[0])
            if q_f > q:
                f, q = f_new, q_f
            a_new, q_a = _golden_max(lambda x: q_of(f, x), em_lower[1], em_upper[1])
            if q_a > q:
                a, q = a_new, q_a
        if q < q_old:
            return np.array(theta_old, dtype=float)
        return np.array([f, a])

    return m_step


def hbd_spec(eps: float = 1e-3) -> ModelSpec:
    """Two-state homozygosity-by-descent chain over genotyped positions.

    Parameters (f, a): expected HBD fraction and the per-centiMorgan decay
    rate of segment identity.  Transitions depend on the inter-position
    distance d through exp(-a d); the initial distribution is the
    stationary (1-f, f).  Genotype emission weights use the per-position
    allele frequency stored on the sequence and a genotyping-error rate
    ``eps``; they carry no parameter dependence, so their derivative
    contribution is identically zero.
    """
    em_lower = np.array([0.0, 1e-4])
    em_upper = np.array([1.0, 1e3])

    def initial(theta):
        f = theta[0]
        return dual.array([1 - f, f])

    return ModelSpec(
        name="hbd",
        n_states=2,
        param_dim=2,
        param_names=("f", "a"),
        state_names=("nHBD", "HBD"),
        alphabet={"AA": 0, "Aa": 1, "aa": 2, "NA": 3},
        missing_code=3,
        initial_distribution=initial,
        transition_matrices=_hbd_transitions,
        emission_weights=lambda theta, seq: _hbd_emissions_matrix(seq, eps),
        m_step=_hbd_m_step_factory(em_lower, em_upper),
        em_lower=em_lower,
        em_upper=em_upper,
        qn_lower=np.array([0.01, 0.01]),
        qn_upper=np.array([0.99, np.inf]),
        start_sampler=lambda rng: rng.uniform([0.01, 0.01], [0.99, 1.0]),
    )


MODELS = {
    "umbrella": umbrella_spec,
    "geyser-disc": geyser_disc_spec,
    "geyser-cont": geyser_cont_spec,
    "hbd": hbd_spec,
}


def get_model(name: str, **kwargs) -> ModelSpec:
    """Look a model up by registry name."""
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**kwargs)
