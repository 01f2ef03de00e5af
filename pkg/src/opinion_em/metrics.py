"""Recovery metrics for fitted latent states against generated ground truth."""
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.metrics import average_precision_score, f1_score

from .model import log_kappa_sigma
from .state import opinion_trajectory


@dataclass
class EvalReport:
    mae_x0: float
    mae_w: float
    sign_f1: float
    action_ap: float
    sign_flipped: bool

    def to_dict(self):
        return asdict(self)


def mae_opinions(estimated, truth):
    """Mean absolute errors of x0 and w under the better of the two mirror images.

    The orientation (identity or joint negation of x0 and w) is picked by
    the x0 error alone; the w error is reported under the same orientation.
    Returns ``(mae_x0, mae_w, flipped)``.
    """
    truth_latent = getattr(truth, "latent", truth)
    if estimated.x0.shape != truth_latent.x0.shape:
        raise ValueError(f"x0 has {len(estimated.x0)} actors, truth has {len(truth_latent.x0)}")
    if estimated.w.shape != truth_latent.w.shape:
        raise ValueError(f"w has {len(estimated.w)} actions, truth has {len(truth_latent.w)}")
    direct = np.mean(np.abs(estimated.x0 - truth_latent.x0))
    mirrored = np.mean(np.abs(-estimated.x0 - truth_latent.x0))
    flipped = bool(mirrored < direct)
    orientation = -1.0 if flipped else 1.0
    mae_w = np.mean(np.abs(orientation * estimated.w - truth_latent.w)) if len(estimated.w) else 0.0
    return float(min(direct, mirrored)), float(mae_w), flipped


def sign_f1(estimated_signs, true_signs):
    """F1 of the sign assignment with +1 (acceptance) as the positive class."""
    estimated_signs = np.asarray(estimated_signs)
    true_signs = np.asarray(true_signs)
    if estimated_signs.shape != true_signs.shape:
        raise ValueError(f"{len(estimated_signs)} estimated signs for {len(true_signs)} arcs")
    if true_signs.size == 0:
        return 1.0
    return float(f1_score(true_signs, estimated_signs, pos_label=1, labels=[-1, 1],
                          zero_division=0.0))


def average_precision(positive_scores, negative_scores):
    y = np.r_[np.ones(len(positive_scores)), np.zeros(len(negative_scores))]
    return float(average_precision_score(y, np.r_[positive_scores, negative_scores]))


def sample_non_arcs(trace, size, rng):
    """Uniform draws (with replacement) of (t, v, a) triples absent from F."""
    n, k, T = trace.n_actors, trace.n_actions, trace.num_timesteps
    present = np.zeros(T * n * k, dtype=bool)
    present[(trace.act_t * n + trace.act_v) * k + trace.act_a] = True
    free = np.flatnonzero(~present)
    if free.size == 0:
        raise ValueError("every (actor, action, timestep) triple is observed; no negatives to sample")
    cells = rng.choice(free, size=size, replace=True)
    t, rest = np.divmod(cells, n * k)
    v, a = np.divmod(rest, k)
    return t, v, a


def _action_scores(trajectory, latent, params, t, v, a):
    x = trajectory[t, v]
    logits = log_kappa_sigma(x[:, None], latent.w[None, :], latent.sigma[None, :], params)
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    return np.exp(log_probs[np.arange(len(a)), a])


def action_link_ap(trace, estimated, params, rng=None, trajectory=None):
    """Average precision of the action probabilities in separating observed
    actor-action arcs from an equal number of sampled non-arcs."""
    if trace.n_actions < 2:
        raise ValueError("need at least two actions to sample non-arcs")
    rng = np.random.default_rng(0) if rng is None else rng
    if trajectory is None:
        trajectory = opinion_trajectory(trace, estimated, params)
    pos = _action_scores(trajectory, estimated, params, trace.act_t, trace.act_v, trace.act_a)
    neg = _action_scores(trajectory, estimated, params, *sample_non_arcs(trace, trace.n_actor_actions, rng))
    return average_precision(pos, neg)


def evaluate(trace, estimated, truth, params, rng=None):
    """All recovery metrics of ``estimated`` against ``truth`` in one report."""
    truth_latent = getattr(truth, "latent", truth)
    mae_x0, mae_w, flipped = mae_opinions(estimated, truth_latent)
    return EvalReport(
        mae_x0=mae_x0,
        mae_w=mae_w,
        sign_f1=sign_f1(estimated.signs, truth_latent.signs),
        action_ap=action_link_ap(trace, estimated, params, rng),
        sign_flipped=flipped,
    )
