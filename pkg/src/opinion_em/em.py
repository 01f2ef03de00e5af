"""Online expectation-maximization for latent opinions, action positions and signs.

Timesteps are processed in order. At step t the signs of earlier arcs are
fixed, so x_t is a deterministic function of x_0 (the clipped linear
recursion in :mod:`opinion_em.model`); each E-step scores the two signs of
every arc at t and each M-step takes one gradient-ascent step on
(x_0, w, sigma), with the gradient pulled back through that recursion.
"""
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import betaln, log_expit, logsumexp

from .model import compute_alpha, propagate_with_masks, backpropagate
from .state import LatentState, opinion_trajectory, update_matrices

logger = logging.getLogger(__name__)

MIN_SIGMA, MAX_SIGMA = 1e-3, 1.0 - 1e-3
UNDERFLOW_FLOOR = 1e-300


class NumericalError(RuntimeError):
    """A restart produced a non-finite objective."""


class FitError(RuntimeError):
    """Every restart failed."""


@dataclass
class FitConfig:
    epochs: int = 2
    restarts: int = 4
    lr_actions: float = 1e-3
    lr_interactions: float = 1e-4
    inner_iterations: int = 30
    convergence_tol: float = 1e-4
    seed: int = 0
    anchors: dict = field(default_factory=dict)
    sigma_prior_enabled: bool = False
    sigma_prior_params: tuple = (8.0, 8.0)
    normalized_posterior: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.restarts < 1 or self.inner_iterations < 1:
            raise ValueError("epochs, restarts and inner_iterations must be >= 1")
        if not (self.lr_actions > 0 and self.lr_interactions > 0):
            raise ValueError("learning rates must be positive")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be >= 0")
        for action, value in self.anchors.items():
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"anchor for action {action!r} must lie in [-1, 1], got {value}")


@dataclass
class Responsibilities:
    """Per-arc weights of the positive and negative sign at one timestep.

    They are not normalized posteriors: ``q_plus + q_minus`` equals
    ``(alpha p+ + (1 - alpha) p-) / (p+ + p-)``.
    """

    q_plus: np.ndarray
    q_minus: np.ndarray
    underflow: bool = False
    kernel_evaluations: int = 0

    def signs(self):
        return np.where(self.q_plus >= self.q_minus, 1, -1).astype(np.int8)


@dataclass
class FitResult:
    latent: LatentState
    trajectory: np.ndarray
    log_likelihood: float
    alpha_series: np.ndarray
    restart_index: int
    restart_log_likelihoods: list = field(default_factory=list)
    epoch_log_likelihoods: list = field(default_factory=list)


class StepData:
    """Index bookkeeping for the arcs of one timestep, reused across iterations."""

    def __init__(self, trace, t):
        self.t = t
        self.src, self.dst = trace.interactions_at(t)
        self.act_v, self.act_a = trace.actions_at(t)
        n_actions = trace.n_actions

        # interactions: unique sources x eligible targets
        self.targets = np.unique(self.dst)
        self.sources, self.src_row = np.unique(self.src, return_inverse=True)
        self.dst_col = np.searchsorted(self.targets, self.dst)
        self.self_mask = self.sources[:, None] == self.targets[None, :]

        # actions: unique actors x all actions, arc counts per cell
        self.action_actors, actor_row = np.unique(self.act_v, return_inverse=True)
        counts = np.zeros((len(self.action_actors), n_actions))
        np.add.at(counts, (actor_row, self.act_a), 1.0)
        self.action_counts = counts
        self.actor_totals = counts.sum(axis=1)

    @property
    def n_interactions(self):
        return len(self.src)

    @property
    def n_actor_actions(self):
        return len(self.act_v)

    def empty(self):
        return self.n_interactions == 0 and self.n_actor_actions == 0

    def arc_weights(self, weights):
        """Sum per-arc ``weights`` into the sources x targets grid."""
        out = np.zeros(self.self_mask.shape)
        np.add.at(out, (self.src_row, self.dst_col), weights)
        return out


def _interaction_logits(x, step, sign, params):
    """log kappa^sign over sources x targets, with self-pairs removed."""
    diff = x[step.sources][:, None] - x[step.targets][None, :]
    dist = np.abs(diff)
    z = params.eps_plus - dist if sign > 0 else dist - params.eps_minus
    logits = log_expit(params.rho_g * z)
    logits = np.where(step.self_mask, -np.inf, logits)
    return logits, z, np.sign(diff)


def link_log_probabilities(x, step, params):
    """log p+ and log p- for every arc of ``step`` (targets restricted to V*_t minus u)."""
    out = []
    for sign in (+1, -1):
        logits, _, _ = _interaction_logits(x, step, sign, params)
        log_norm = logsumexp(logits, axis=1)
        out.append(logits[step.src_row, step.dst_col] - log_norm[step.src_row])
    return out[0], out[1]


def e_step(x_t, step, alpha, params, normalized=False):
    """Sign weights ``q+ = alpha p+ / (p+ + p-)`` and ``q- = (1 - alpha) p- / (p+ + p-)``.

    With ``normalized`` the denominator carries the prior weights as well,
    giving proper posteriors.
    """
    if step.n_interactions == 0:
        return Responsibilities(np.zeros(0), np.zeros(0))
    log_p_plus, log_p_minus = link_log_probabilities(np.asarray(x_t, dtype=float), step, params)
    p_plus, p_minus = np.exp(log_p_plus), np.exp(log_p_minus)
    num_plus, num_minus = alpha * p_plus, (1.0 - alpha) * p_minus
    denom = num_plus + num_minus if normalized else p_plus + p_minus
    underflow = bool(np.any(denom < UNDERFLOW_FLOOR))
    if underflow:
        warnings.warn(f"link probabilities underflow at t={step.t}; clamping", RuntimeWarning)
    denom = np.maximum(denom, UNDERFLOW_FLOOR)
    evaluations = 2 * step.self_mask.size + step.n_interactions
    return Responsibilities(num_plus / denom, num_minus / denom, underflow, evaluations)


def interaction_objective(x_t, step, resp, params):
    """Weighted log link probability and its gradient with respect to x_t."""
    grad = np.zeros_like(x_t)
    value = 0.0
    if step.n_interactions == 0:
        return value, grad
    for sign, q in ((+1, resp.q_plus), (-1, resp.q_minus)):
        logits, z, direction = _interaction_logits(x_t, step, sign, params)
        log_norm = logsumexp(logits, axis=1)
        weights = step.arc_weights(q)
        log_p = np.where(step.self_mask, 0.0, logits - log_norm[:, None])
        value += float(np.sum(weights * log_p))
        softmax = np.exp(logits - log_norm[:, None])
        # d log kappa / d z = rho * (1 - kappa); z moves against |d| for +, with it for -
        dlog_dz = params.rho_g * np.exp(log_expit(-params.rho_g * z))
        slope = -1.0 if sign > 0 else 1.0
        g = (weights - weights.sum(axis=1, keepdims=True) * softmax) * dlog_dz * slope * direction
        g = np.where(step.self_mask, 0.0, g)
        np.add.at(grad, step.sources, g.sum(axis=1))
        np.add.at(grad, step.targets, -g.sum(axis=0))
    return value, grad


def action_objective(x_t, w, sigma, step, params):
    """Action log-likelihood at one step and its gradients w.r.t. x_t, w and sigma."""
    grad_x = np.zeros_like(x_t)
    if step.n_actor_actions == 0:
        return 0.0, grad_x, np.zeros_like(w), np.zeros_like(sigma)
    diff = x_t[step.action_actors][:, None] - w[None, :]
    u = sigma[None, :] - np.abs(diff)
    logits = log_expit(params.rho_z * u)
    log_norm = logsumexp(logits, axis=1)
    value = float(np.sum(step.action_counts * logits) - np.sum(step.actor_totals * log_norm))
    softmax = np.exp(logits - log_norm[:, None])
    dlog_du = params.rho_z * np.exp(log_expit(-params.rho_z * u))
    g = (step.action_counts - step.actor_totals[:, None] * softmax) * dlog_du
    direction = np.sign(diff)
    grad_sigma = g.sum(axis=0)
    grad_w = (g * direction).sum(axis=0)
    grad_x[step.action_actors] = -(g * direction).sum(axis=1)
    return value, grad_x, grad_w, grad_sigma


def sigma_log_prior(sigma, prior_params):
    a, b = prior_params
    value = float(np.sum((a - 1) * np.log(sigma) + (b - 1) * np.log1p(-sigma)) - len(sigma) * betaln(a, b))
    grad = (a - 1) / sigma - (b - 1) / (1.0 - sigma)
    return value, grad


@dataclass
class Gradients:
    x0_interactions: np.ndarray
    x0_actions: np.ndarray
    w: np.ndarray
    sigma: np.ndarray

    @property
    def x0(self):
        return self.x0_interactions + self.x0_actions


def _evaluate(x0, w, sigma, step, resp, matrices, params, fit_config, anchored, with_grad=True,
              masks_x=None):
    if masks_x is None:
        x_t, masks = propagate_with_masks(x0, matrices)
    else:
        x_t, masks = masks_x
    value_i, grad_i = interaction_objective(x_t, step, resp, params)
    value_a, grad_ax, grad_w, grad_sigma = action_objective(x_t, w, sigma, step, params)
    value = value_i + value_a
    if fit_config.sigma_prior_enabled:
        prior_value, prior_grad = sigma_log_prior(sigma, fit_config.sigma_prior_params)
        value += prior_value
        grad_sigma = grad_sigma + prior_grad
    if not with_grad:
        return value, None
    grad_w = np.where(anchored, 0.0, grad_w)
    grads = Gradients(backpropagate(grad_i, matrices, masks), backpropagate(grad_ax, matrices, masks),
                      grad_w, grad_sigma)
    return value, grads


def m_step_objective(x0, w, sigma, step, resp, matrices, params, fit_config=None):
    """M-step objective at one step: action log-likelihood plus the q-weighted
    log link probabilities (plus the log prior on sigma when enabled).

    ``matrices`` are M(0), ..., M(t-1); x_t is recomputed from ``x0``.
    """
    fit_config = fit_config or FitConfig()
    value, _ = _evaluate(np.asarray(x0, dtype=float), np.asarray(w, dtype=float),
                         np.asarray(sigma, dtype=float), step, resp, matrices, params,
                         fit_config, None, with_grad=False)
    return value


def m_step_gradients(x0, w, sigma, step, resp, matrices, params, fit_config=None, anchored=None):
    """Exact gradients of :func:`m_step_objective` w.r.t. x0, w and sigma.

    ``anchored`` is a boolean mask over actions whose w gradient is forced to 0.
    """
    fit_config = fit_config or FitConfig()
    w = np.asarray(w, dtype=float)
    anchored = np.zeros(len(w), dtype=bool) if anchored is None else np.asarray(anchored, bool)
    _, grads = _evaluate(np.asarray(x0, dtype=float), w, np.asarray(sigma, dtype=float), step,
                         resp, matrices, params, fit_config, anchored)
    return grads


class _Parameters:
    """Mutable (x0, w, sigma) with the anchor mask and projections."""

    def __init__(self, x0, w, sigma, anchor_values):
        self.x0 = np.array(x0, dtype=float)
        self.w = np.array(w, dtype=float)
        self.sigma = np.array(sigma, dtype=float)
        self.anchored = ~np.isnan(anchor_values)
        self.anchor_values = anchor_values
        self.w[self.anchored] = anchor_values[self.anchored]

    def ascend(self, grads, fit_config):
        lr_a, lr_i = fit_config.lr_actions, fit_config.lr_interactions
        self.x0 = np.clip(self.x0 + lr_i * grads.x0_interactions + lr_a * grads.x0_actions, -1, 1)
        self.w = np.clip(self.w + lr_a * grads.w, -1, 1)
        self.w[self.anchored] = self.anchor_values[self.anchored]
        self.sigma = np.clip(self.sigma + lr_a * grads.sigma, MIN_SIGMA, MAX_SIGMA)


def em_timestep(trace, t, params_state, signs, params, fit_config, step=None, alpha=None):
    """Run the EM loop for timestep ``t`` and assign signs to its arcs in place.

    ``params_state`` holds (x0, w, sigma) and is updated in place; ``signs``
    for earlier steps must already be set. Returns ``(alpha_t, n_iterations)``.
    """
    step = step or StepData(trace, t)
    sl = trace.interaction_slice(t)
    matrices = update_matrices(trace, signs, params, upto=t)
    if step.empty():
        return (alpha if alpha is not None else 0.5), 0

    if alpha is None:
        x_t, _ = propagate_with_masks(params_state.x0, matrices)
        alpha = compute_alpha(x_t, step.src, step.dst, params) if step.n_interactions else 0.5

    previous = None
    iterations = 0
    for iterations in range(1, fit_config.inner_iterations + 1):
        forward = propagate_with_masks(params_state.x0, matrices)
        resp = e_step(forward[0], step, alpha, params, fit_config.normalized_posterior)
        value, grads = _evaluate(params_state.x0, params_state.w, params_state.sigma, step, resp,
                                 matrices, params, fit_config, params_state.anchored,
                                 masks_x=forward)
        if not np.isfinite(value):
            raise NumericalError(f"non-finite M-step objective at t={t} (iteration {iterations})")
        if previous is not None and abs(value - previous) < fit_config.convergence_tol:
            break
        previous = value
        params_state.ascend(grads, fit_config)

    x_t, _ = propagate_with_masks(params_state.x0, matrices)
    resp = e_step(x_t, step, alpha, params, fit_config.normalized_posterior)
    signs[sl] = resp.signs()
    return alpha, iterations


def initial_parameters(trace, fit_config, rng):
    x0 = rng.uniform(-1.0, 1.0, size=trace.n_actors)
    w = rng.uniform(-1.0, 1.0, size=trace.n_actions)
    sigma = rng.uniform(0.3, 0.7, size=trace.n_actions)
    return x0, w, sigma


def anchor_vector(trace, anchors):
    values = np.full(trace.n_actions, np.nan)
    for action, value in anchors.items():
        if action not in trace.action_index:
            raise ValueError(f"anchor references unknown action {action!r}")
        values[trace.action_index[action]] = float(value)
    return values


def complete_log_likelihood(trace, latent, params, return_alpha=False):
    """log P(E | x) + log P(F | x, w, sigma) with x_t rebuilt from x0 and the signs.

    The interaction term mixes both signs with prior weights alpha_t and
    1 - alpha_t, alpha_t computed over the arcs of each step.
    """
    trajectory = opinion_trajectory(trace, latent, params)
    total = 0.0
    alphas = np.full(trace.num_timesteps, 0.5)
    for t in range(trace.num_timesteps):
        step = StepData(trace, t)
        x_t = trajectory[t]
        if step.n_interactions:
            alpha = compute_alpha(x_t, step.src, step.dst, params)
            alphas[t] = alpha
            log_p_plus, log_p_minus = link_log_probabilities(x_t, step, params)
            with np.errstate(divide="ignore"):
                mixed = np.logaddexp(np.log(alpha) + log_p_plus, np.log1p(-alpha) + log_p_minus)
            total += float(mixed.sum())
        value, *_ = action_objective(x_t, latent.w, latent.sigma, step, params)
        total += value
    if return_alpha:
        return total, alphas
    return total


def _fit_restart(trace, params, fit_config, restart, steps):
    rng = np.random.default_rng(fit_config.seed + restart)
    x0, w, sigma = initial_parameters(trace, fit_config, rng)
    state = _Parameters(x0, w, sigma, anchor_vector(trace, fit_config.anchors))
    signs = np.zeros(trace.n_interactions, dtype=np.int8)
    alphas = np.full(trace.num_timesteps, 0.5)
    epoch_ll = []
    for epoch in range(fit_config.epochs):
        for t in range(trace.num_timesteps):
            alphas[t], _ = em_timestep(trace, t, state, signs, params, fit_config, steps[t])
        latent = LatentState(state.x0, state.w, state.sigma, signs)
        epoch_ll.append(complete_log_likelihood(trace, latent, params))
        if epoch and epoch_ll[-1] < epoch_ll[-2] - 1e-6:
            logger.info("restart %d: log-likelihood decreased in epoch %d (%.6f -> %.6f)",
                        restart, epoch, epoch_ll[-2], epoch_ll[-1])
    latent = LatentState(state.x0.copy(), state.w.copy(), state.sigma.copy(), signs.copy())
    return latent, epoch_ll


def _run_restart(trace, params, fit_config, restart, steps):
    try:
        latent, epoch_ll = _fit_restart(trace, params, fit_config, restart, steps)
        ll, alphas = complete_log_likelihood(trace, latent, params, return_alpha=True)
        if not np.isfinite(ll):
            raise NumericalError(f"non-finite log-likelihood {ll}")
    except NumericalError as exc:
        logger.warning("restart %d aborted: %s", restart, exc)
        return restart, None, str(exc)
    return restart, (latent, epoch_ll, ll, alphas), None


def fit(trace, params, fit_config=None, n_jobs=1):
    """Fit (x0, w, sigma, signs) to ``trace`` under fixed macro parameters.

    Runs ``fit_config.restarts`` independent restarts (seeded
    ``seed + restart``), each for ``epochs`` passes over the timesteps, and
    keeps the restart with the highest complete-data log-likelihood.
    """
    fit_config = fit_config or FitConfig()
    anchor_vector(trace, fit_config.anchors)
    steps = [StepData(trace, t) for t in range(trace.num_timesteps)]
    runs = Parallel(n_jobs=n_jobs)(
        delayed(_run_restart)(trace, params, fit_config, r, steps)
        for r in range(fit_config.restarts))
    best = None
    restart_ll = []
    failures = []
    for restart, outcome, error in runs:
        if outcome is None:
            failures.append(f"restart {restart}: {error}")
            restart_ll.append(float("nan"))
            continue
        latent, epoch_ll, ll, alphas = outcome
        restart_ll.append(ll)
        if best is None or ll > best.log_likelihood:
            best = FitResult(latent, opinion_trajectory(trace, latent, params), ll, alphas,
                             restart, epoch_log_likelihoods=epoch_ll)
    if best is None:
        raise FitError("all restarts failed: " + "; ".join(failures))
    best.restart_log_likelihoods = restart_ll
    return best
