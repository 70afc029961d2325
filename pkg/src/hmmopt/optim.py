"""The four estimators: Baum-Welch, SQUAREM, projected quasi-Newton, and
the hybrid EM/quasi-Newton scheme.

All four share the relative-tolerance stopping rule (:func:`should_stop`)
and per-run instrumentation: forward/backward call counts, iteration
count, wall time, and the accepted log-likelihood trajectory.  The
quasi-Newton family minimizes the negative log-likelihood internally;
run records always report the log-likelihood.

Box handling: EM-family optimizers work in each model's natural parameter
box, the quasi-Newton family in the narrowed box where the likelihood and
its gradient stay finite.  Gradient components pushing outside an active
bound are zeroed and trial points are clipped, so every iterate satisfies
its box exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import core


class ModelError(RuntimeError):
    """An M-step produced parameters outside the optimizer's box."""


@dataclass
class StopCriterion:
    """Relative log-likelihood change threshold shared by all optimizers."""

    reltol: float = 1.49e-8

    def __post_init__(self):
        if not self.reltol > 0:
            raise ValueError("reltol must be positive")


@dataclass
class ArmijoParams:
    """Backtracking line-search constants."""

    c: float = 1e-4
    shrink: float = 0.5
    max_halvings: int = 30


@dataclass
class OptimizerConfig:
    """Flat bag of tunables, serializable as a key=value config file."""

    reltol: float = 1.49e-8
    max_iter: int = 500
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    armijo_max_halvings: int = 30
    squarem_max_halvings: int = 5

    def stop(self) -> StopCriterion:
        return StopCriterion(self.reltol)

    def armijo(self) -> ArmijoParams:
        return ArmijoParams(self.armijo_c, self.armijo_shrink, self.armijo_max_halvings)


def save_config(cfg: OptimizerConfig, path) -> None:
    with open(path, "w") as fh:
        for key, value in vars(cfg).items():
            fh.write(f"{key} = {value}\n")


def load_config(path) -> OptimizerConfig:
    cfg = OptimizerConfig()
    casts = {k: type(v) for k, v in vars(cfg).items()}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in casts:
                raise KeyError(f"unknown config key {key!r}")
            setattr(cfg, key, casts[key](raw.strip()))
    return cfg


@dataclass
class RunRecord:
    """Everything one optimizer run produced, for reports and tests."""

    optimizer_name: str
    final_theta: core.ParamVector
    final_loglik: float
    iterations: int
    n_forward: int
    n_backward: int
    wall_time: float
    converged: bool
    mode_trace: list | None = None
    ll_trace: list = field(default_factory=list)
    start_theta: np.ndarray | None = None
    error: str | None = None


@dataclass
class BfgsState:
    """Inverse-Hessian approximation and the step/gradient memory."""

    H: np.ndarray
    prev_theta: np.ndarray | None = None
    prev_grad: np.ndarray | None = None


def should_stop(ll_prev: float, ll_curr: float, crit: StopCriterion) -> bool:
    """Relative-change stop test on two consecutive log-likelihoods."""
    return abs(ll_prev - ll_curr) / (abs(ll_prev) + crit.reltol) < crit.reltol


def update_inverse_hessian(H: np.ndarray, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """BFGS rank-two inverse-Hessian update from a step/gradient-change pair.

    Preserves symmetry and, when s'y > 0, positive definiteness; callers
    must check the curvature condition before applying it.  (The DFP-form
    inverse update degrades badly under backtracking-only line searches,
    stalling far from stationarity; BFGS is robust to inexact searches.)
    """
    rho = 1.0 / float(s @ y)
    A = np.eye(s.size) - rho * np.outer(s, y)
    H_new = A @ H @ A.T + rho * np.outer(s, s)
    return 0.5 * (H_new + H_new.T)


def _active_set(grad_f: np.ndarray, theta: np.ndarray, lower, upper) -> np.ndarray:
    """Coordinates pinned at a bound whose gradient pushes outward."""
    return ((theta <= lower) & (grad_f > 0)) | ((theta >= upper) & (grad_f < 0))


def _project_gradient(grad_f: np.ndarray, theta: np.ndarray, lower, upper) -> np.ndarray:
    """Zero the components of the descent gradient blocked by active bounds."""
    out = grad_f.copy()
    out[_active_set(grad_f, theta, lower, upper)] = 0.0
    return out


def _search_direction(H: np.ndarray, grad_f: np.ndarray, theta: np.ndarray,
                      lower, upper) -> tuple:
    """Quasi-Newton direction restricted to the free coordinates.

    Both the gradient and the direction are projected: the inverse-Hessian
    mixes coordinates, so without masking the direction it could drag an
    actively-bounded coordinate back off its bound against the gradient.
    Masking leaves the model slope g'p = -g'Hg untouched (g is zero on the
    active set), so the Armijo test stays consistent with the step taken.
    """
    active = _active_set(grad_f, theta, lower, upper)
    gproj = grad_f.copy()
    gproj[active] = 0.0
    p = -(H @ gproj)
    p[active] = 0.0
    return gproj, p


class _Counters:
    __slots__ = ("n_forward", "n_backward")

    def __init__(self):
        self.n_forward = 0
        self.n_backward = 0


def _finish(name, model, family, theta, ll, iterations, counters, t0, converged,
            mode_trace=None, ll_trace=None, start_theta=None, error=None) -> RunRecord:
    lower = model.em_lower if family == "em" else model.qn_lower
    upper = model.em_upper if family == "em" else model.qn_upper
    return RunRecord(
        optimizer_name=name,
        final_theta=core.ParamVector(np.asarray(theta, dtype=float), lower, upper),
        final_loglik=float(ll),
        iterations=iterations,
        n_forward=counters.n_forward,
        n_backward=counters.n_backward,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        mode_trace=mode_trace,
        ll_trace=list(ll_trace or []),
        start_theta=None if start_theta is None else np.asarray(start_theta, dtype=float),
        error=error,
    )


def _check_box(theta: np.ndarray, lower, upper) -> None:
    if np.any(theta < lower) or np.any(theta > upper):
        raise ModelError("M-step left the parameter box")


def _estep(model, theta, seq, counters):
    """One full E-step: forward then backward, both counted."""
    fw = core.forward_conditional(model, theta, seq)
    counters.n_forward += 1
    post = core.backward(model, theta, seq, fw)
    counters.n_backward += 1
    return fw, post


def baum_welch(model, seq, theta0, crit: StopCriterion | None = None,
               max_iter: int = 500) -> RunRecord:
    """Plain EM: forward-backward posteriors, then the model's M-step.

    Stops when two consecutive log-likelihoods pass the relative-change
    test; one iteration is one E-step plus (except on the stopping pass)
    one M-step, so forward count, backward count, and iteration count
    coincide.
    """
    crit = crit or StopCriterion()
    counters = _Counters()
    t0 = time.perf_counter()
    theta = np.asarray(theta0, dtype=float)
    start = theta.copy()
    ll_prev = None
    ll_trace = []
    iterations = 0
    for it in range(1, max_iter + 1):
        try:
            fw, post = _estep(model, theta, seq, counters)
        except core.NumericalUnderflow:
            return _finish("baum-welch", model, "em", theta, -np.inf, iterations,
                           counters, t0, False, ll_trace=ll_trace, start_theta=start,
                           error="underflow")
        iterations = it
        ll = fw.loglik
        ll_trace.append(ll)
        if ll_prev is not None and should_stop(ll_prev, ll, crit):
            return _finish("baum-welch", model, "em", theta, ll, iterations,
                           counters, t0, True, ll_trace=ll_trace, start_theta=start)
        if it == max_iter:
            break
        theta_new = np.asarray(model.m_step(seq, post, theta), dtype=float)
        _check_box(theta_new, model.em_lower, model.em_upper)
        theta = theta_new
        ll_prev = ll
    return _finish("baum-welch", model, "em", theta, ll, iterations,
                   counters, t0, False, ll_trace=ll_trace, start_theta=start)


def squarem(model, seq, theta0, crit: StopCriterion | None = None,
            max_iter: int = 500, max_halvings: int = 5) -> RunRecord:
    """EM accelerated by two-step extrapolation.

    Each cycle runs two EM updates, extrapolates along the implied
    trajectory with step length -sqrt(r.r / v.v), clips the candidate to
    the box, and keeps it only if it does not lose likelihood against the
    two plain EM steps (halving the step toward -1, i.e. toward the plain
    EM result, up to ``max_halvings`` times).  An accepted extrapolation
    is followed by one stabilizing EM update.  Iterations count EM-map
    applications, so they are comparable with Baum-Welch's.
    """
    crit = crit or StopCriterion()
    counters = _Counters()
    t0 = time.perf_counter()
    lower, upper = model.em_lower, model.em_upper
    theta = np.asarray(theta0, dtype=float)
    start = theta.copy()
    ll_trace = []
    iterations = 0
    cached = None  # (ll, post) for the current theta, when already evaluated

    def fail(ll, err):
        return _finish("squarem", model, "em", theta, ll, iterations, counters,
                       t0, False, ll_trace=ll_trace, start_theta=start, error=err)

    ll_path_prev = None
    while iterations < max_iter:
        # anchor point of this cycle
        if cached is None:
            try:
                fw0, post0 = _estep(model, theta, seq, counters)
            except core.NumericalUnderflow:
                return fail(-np.inf, "underflow")
            ll0 = fw0.loglik
        else:
            ll0, post0 = cached
            cached = None
        ll_trace.append(ll0)
        if ll_path_prev is not None and should_stop(ll_path_prev, ll0, crit):
            return _finish("squarem", model, "em", theta, ll0, iterations, counters,
                           t0, True, ll_trace=ll_trace, start_theta=start)
        ll_path_prev = ll0

        theta1 = np.asarray(model.m_step(seq, post0, theta), dtype=float)
        _check_box(theta1, lower, upper)
        iterations += 1
        try:
            fw1, post1 = _estep(model, theta1, seq, counters)
        except core.NumericalUnderflow:
            theta = theta1
            return fail(-np.inf, "underflow")
        ll1 = fw1.loglik
        ll_trace.append(ll1)
        stopped = should_stop(ll0, ll1, crit)
        if stopped or iterations >= max_iter:
            theta = theta1
            return _finish("squarem", model, "em", theta, ll1, iterations, counters,
                           t0, stopped, ll_trace=ll_trace, start_theta=start)
        ll_path_prev = ll1

        theta2 = np.asarray(model.m_step(seq, post1, theta1), dtype=float)
        _check_box(theta2, lower, upper)
        iterations += 1
        try:
            fw2, post2 = _estep(model, theta2, seq, counters)
        except core.NumericalUnderflow:
            theta = theta2
            return fail(-np.inf, "underflow")
        ll2 = fw2.loglik
        ll_trace.append(ll2)
        stopped = should_stop(ll1, ll2, crit)
        if stopped or iterations >= max_iter:
            theta = theta2
            return _finish("squarem", model, "em", theta, ll2, iterations, counters,
                           t0, stopped, ll_trace=ll_trace, start_theta=start)
        ll_path_prev = ll2

        r = theta1 - theta
        v = theta2 - 2.0 * theta1 + theta
        vv = float(v @ v)
        if vv == 0.0:
            # collinear iterates: keep the plain double-EM result
            theta = theta2
            cached = (ll2, post2)
            continue

        step = -np.sqrt(float(r @ r) / vv)
        accepted = False
        for _ in range(max_halvings + 1):
            cand = np.clip(theta - 2.0 * step * r + step * step * v, lower, upper)
            try:
                fwc, postc = _estep(model, cand, seq, counters)
            except core.NumericalUnderflow:
                step = (step - 1.0) / 2.0
                continue
            if fwc.loglik >= ll2:
                accepted = True
                break
            step = (step - 1.0) / 2.0
        if accepted:
            ll_trace.append(fwc.loglik)
            ll_path_prev = fwc.loglik
            theta3 = np.asarray(model.m_step(seq, postc, cand), dtype=float)
            _check_box(theta3, lower, upper)
            iterations += 1
            theta = theta3
            cached = None
        else:
            theta = theta2
            cached = (ll2, post2)
    return _finish("squarem", model, "em", theta, ll_path_prev if ll_path_prev is not None else -np.inf,
                   iterations, counters, t0, False, ll_trace=ll_trace, start_theta=start)


def _plain_loglik(model, theta, seq, counters) -> float:
    counters.n_forward += 1
    try:
        return core.forward_conditional(model, theta, seq).loglik
    except core.NumericalUnderflow:
        return -np.inf


def _line_search(model, seq, counters, theta, f_val, grad_proj, direction,
                 lower, upper, armijo: ArmijoParams):
    """Backtracking search along a projected direction with box clipping.

    Returns (theta_new, f_new) or None when no step satisfies the
    sufficient-decrease condition.  Non-finite trial objectives count as
    rejections, not errors.
    """
    slope = float(grad_proj @ direction)
    alpha = 1.0
    for _ in range(armijo.max_halvings + 1):
        cand = np.clip(theta + alpha * direction, lower, upper)
        f_cand = -_plain_loglik(model, cand, seq, counters)
        if np.isfinite(f_cand) and f_cand <= f_val + armijo.c * alpha * slope:
            return cand, f_cand
        alpha *= armijo.shrink
    return None


def qn_box(model, seq, theta0, crit: StopCriterion | None = None,
           max_iter: int = 500, armijo: ArmijoParams | None = None) -> RunRecord:
    """Full-memory quasi-Newton descent on the negative log-likelihood.

    Bounds are handled by projecting the gradient at active bounds and
    clipping trial points; the inverse-Hessian approximation is rebuilt
    from the identity whenever an accepted step violates the curvature
    condition.  Performs no backward passes.
    """
    crit = crit or StopCriterion()
    armijo = armijo or ArmijoParams()
    counters = _Counters()
    t0 = time.perf_counter()
    lower, upper = model.qn_lower, model.qn_upper
    theta = np.asarray(theta0, dtype=float)
    start = theta.copy()
    ll_trace = []
    iterations = 0

    counters.n_forward += 1
    ll, grad = core.loglik_with_gradient(model, theta, seq)
    if not np.isfinite(ll):
        return _finish("qn", model, "qn", theta, -np.inf, 0, counters, t0, False,
                       ll_trace=ll_trace, start_theta=start, error="nonfinite_start")
    ll_trace.append(ll)
    gf = -grad
    H = np.eye(theta.size)
    for it in range(1, max_iter + 1):
        gproj, p = _search_direction(H, gf, theta, lower, upper)
        if float(gproj @ p) >= 0.0 and float(gproj @ gproj) > 0.0:
            H = np.eye(theta.size)
            p = -gproj
        hit = _line_search(model, seq, counters, theta, -ll, gproj, p, lower, upper, armijo)
        if hit is None:
            return _finish("qn", model, "qn", theta, ll, iterations, counters, t0,
                           False, ll_trace=ll_trace, start_theta=start,
                           error="line_search")
        theta_new, f_new = hit
        counters.n_forward += 1
        ll_new, grad_new = core.loglik_with_gradient(model, theta_new, seq)
        if not np.isfinite(ll_new):
            return _finish("qn", model, "qn", theta, ll, iterations, counters, t0,
                           False, ll_trace=ll_trace, start_theta=start,
                           error="nonfinite")
        iterations = it
        ll_trace.append(ll_new)
        if should_stop(ll, ll_new, crit):
            return _finish("qn", model, "qn", theta_new, ll_new, iterations, counters,
                           t0, True, ll_trace=ll_trace, start_theta=start)
        s = theta_new - theta
        y = (-grad_new) - gf
        if float(s @ y) > 0.0:
            H = update_inverse_hessian(H, s, y)
        else:
            H = np.eye(theta.size)
        theta, ll, gf = theta_new, ll_new, -grad_new
    return _finish("qn", model, "qn", theta, ll, iterations, counters, t0, False,
                   ll_trace=ll_trace, start_theta=start)


def qnem(model, seq, theta0, crit: StopCriterion | None = None,
         max_iter: int = 500, armijo: ArmijoParams | None = None) -> RunRecord:
    """Hybrid scheme: EM updates until the curvature condition holds, then
    quasi-Newton steps, falling back to EM whenever it fails again.

    Starts in EM mode with the identity inverse-Hessian.  After every
    parameter update (either kind) the step/gradient-change pair is
    tested; success updates the inverse Hessian and (re)enters
    quasi-Newton mode, failure resets it to the identity and returns to
    EM.  Gradients are carried along EM steps too, which costs the
    derivative overhead once per EM iteration but makes the switch test
    free of extra passes.
    """
    crit = crit or StopCriterion()
    armijo = armijo or ArmijoParams()
    counters = _Counters()
    t0 = time.perf_counter()
    lower, upper = model.qn_lower, model.qn_upper
    theta = np.asarray(theta0, dtype=float)
    start = theta.copy()
    mode_trace: list[str] = []
    ll_trace = []
    iterations = 0

    def fail(ll, err):
        return _finish("qnem", model, "qn", theta, ll, iterations, counters, t0,
                       False, mode_trace=mode_trace, ll_trace=ll_trace,
                       start_theta=start, error=err)

    counters.n_forward += 1
    try:
        fw, grad = core.forward_with_gradient(model, theta, seq)
    except core.NumericalUnderflow:
        return fail(-np.inf, "nonfinite_start")
    ll = fw.loglik
    ll_trace.append(ll)
    gf = -grad
    H = np.eye(theta.size)
    mode = "EM"
    for it in range(1, max_iter + 1):
        if mode == "EM":
            counters.n_backward += 1
            post = core.backward(model, theta, seq, fw)
            theta_new = np.clip(np.asarray(model.m_step(seq, post, theta), dtype=float),
                                lower, upper)
            counters.n_forward += 1
            try:
                fw_new, grad_new = core.forward_with_gradient(model, theta_new, seq)
            except core.NumericalUnderflow:
                theta = theta_new
                return fail(-np.inf, "underflow")
            ll_new = fw_new.loglik
        else:
            gproj, p = _search_direction(H, gf, theta, lower, upper)
            if float(gproj @ p) >= 0.0 and float(gproj @ gproj) > 0.0:
                H = np.eye(theta.size)
                p = -gproj
            hit = _line_search(model, seq, counters, theta, -ll, gproj, p,
                               lower, upper, armijo)
            if hit is None:
                return fail(ll, "line_search")
            theta_new = hit[0]
            counters.n_forward += 1
            try:
                fw_new, grad_new = core.forward_with_gradient(model, theta_new, seq)
            except core.NumericalUnderflow:
                return fail(ll, "nonfinite")
            ll_new = fw_new.loglik
        iterations = it
        mode_trace.append(mode)
        ll_trace.append(ll_new)
        if should_stop(ll, ll_new, crit):
            return _finish("qnem", model, "qn", theta_new, ll_new, iterations,
                           counters, t0, True, mode_trace=mode_trace,
                           ll_trace=ll_trace, start_theta=start)
        s = theta_new - theta
        y = (-grad_new) - gf
        if float(s @ y) > 0.0:
            H = update_inverse_hessian(H, s, y)
            mode = "QN"
        else:
            H = np.eye(theta.size)
            mode = "EM"
        theta, ll, fw, gf = theta_new, ll_new, fw_new, -grad_new
    return _finish("qnem", model, "qn", theta, ll, iterations, counters, t0, False,
                   mode_trace=mode_trace, ll_trace=ll_trace, start_theta=start)


OPTIMIZERS = {
    "baum-welch": baum_welch,
    "squarem": squarem,
    "qn": qn_box,
    "qnem": qnem,
}


def run_optimizer(name: str, model, seq, theta0, **kwargs) -> RunRecord:
    """Dispatch one run by optimizer registry name."""
    try:
        fn = OPTIMIZERS[name]
    except KeyError:
        raise KeyError(f"unknown optimizer {name!r}; choose from {sorted(OPTIMIZERS)}") from None
    return fn(model, seq, theta0, **kwargs)
