"""Synthetic traces drawn from the stochastic opinion-dynamics process."""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .model import (MacroParams, Scenario, compute_alpha_all_pairs, log_kappa,
                    log_kappa_sigma, propagate, scenario, build_update_matrix)
from .state import LatentState
from .trace import Trace

SIGMA_INIT_RANGE = (0.3, 0.7)


@dataclass
class GenConfig:
    num_actors: int = 30
    num_actions: int = 20
    num_timesteps: int = 10
    interactions_per_actor_per_step: int = 3
    actions_per_actor_per_step: int = 15
    scenario: Scenario = field(default_factory=lambda: scenario("balanced"))
    seed: int = 0
    hard_latitudes: bool = False

    def __post_init__(self):
        for name in ("num_actors", "num_actions", "num_timesteps",
                     "interactions_per_actor_per_step", "actions_per_actor_per_step"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_actors < 2:
            raise ValueError("need at least two actors to generate interactions")

    @property
    def params(self):
        params = self.scenario.params
        return params.hardened() if self.hard_latitudes else params


@dataclass
class GroundTruth:
    latent: LatentState
    trajectory: np.ndarray
    alpha_series: np.ndarray


def init_latent(config, rng):
    """Draw x0 and w uniformly in [-1, 1] and sigma uniformly in [0.3, 0.7]."""
    x0 = rng.uniform(-1.0, 1.0, size=config.num_actors)
    w = rng.uniform(-1.0, 1.0, size=config.num_actions)
    sigma = rng.uniform(*SIGMA_INIT_RANGE, size=config.num_actions)
    return LatentState(x0, w, sigma)


def _sample_categorical(rng, logits):
    p = np.exp(logits - logsumexp(logits))
    return int(rng.choice(len(p), p=p / p.sum()))


def generate_step_interactions(x, config, rng, params=None, active=None):
    """Emit ``interactions_per_actor_per_step`` signed arcs for every actor.

    Each arc draws a sign (positive with probability alpha_t, computed over
    all ordered actor pairs) and then a target among the active actors other
    than the source, proportionally to kappa of that sign. When no candidate
    lies on the drawn sign's side of its latitude, the opposite sign is used
    if it has one.

    Returns ``(src, dst, signs, alpha)``.
    """
    params = config.params if params is None else params
    x = np.asarray(x, dtype=float)
    n = len(x)
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    alpha = compute_alpha_all_pairs(x, params)

    dist = np.abs(x[:, None] - x[None, :])
    logits = {+1: log_kappa(+1, x[:, None], x[None, :], params),
              -1: log_kappa(-1, x[:, None], x[None, :], params)}
    in_latitude = {+1: dist < params.eps_plus, -1: dist > params.eps_minus}

    src, dst, signs = [], [], []
    for u in range(n):
        eligible = active.copy()
        eligible[u] = False
        candidates = np.flatnonzero(eligible)
        if candidates.size == 0:
            continue
        has_side = {s: bool(in_latitude[s][u, candidates].any()) for s in (+1, -1)}
        for _ in range(config.interactions_per_actor_per_step):
            sign = +1 if rng.random() < alpha else -1
            if not has_side[sign] and has_side[-sign]:
                sign = -sign
            v = candidates[_sample_categorical(rng, logits[sign][u, candidates])]
            src.append(u)
            dst.append(int(v))
            signs.append(sign)
    return (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
            np.array(signs, dtype=np.int8), alpha)


def generate_step_actions(x, w, sigma, config, rng, params=None):
    """``actions_per_actor_per_step`` independent action draws per actor.

    Returns ``(actor, action)`` index arrays.
    """
    params = config.params if params is None else params
    x = np.asarray(x, dtype=float)
    zeta = config.actions_per_actor_per_step
    logits = log_kappa_sigma(x[:, None], np.asarray(w)[None, :], np.asarray(sigma)[None, :],
                             params)
    probs = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    actors, actions = [], []
    for v in range(len(x)):
        p = probs[v] / probs[v].sum()
        actions.append(rng.choice(len(p), size=zeta, p=p))
        actors.append(np.full(zeta, v))
    return np.concatenate(actors).astype(np.int64), np.concatenate(actions).astype(np.int64)


def actor_ids(n):
    return [f"u{i}" for i in range(n)]


def action_ids(n):
    return [f"a{i}" for i in range(n)]


def generate_trace(config):
    """Run the generative process for ``config.num_timesteps`` steps.

    Returns ``(trace, truth)``; the same config always yields the same output.
    """
    rng = np.random.default_rng(config.seed)
    params = config.params
    latent = init_latent(config, rng)
    x = latent.x0.copy()
    rows = [x]
    alphas = []
    interactions, actor_actions, all_signs = [], [], []
    actors, actions = actor_ids(config.num_actors), action_ids(config.num_actions)
    for t in range(config.num_timesteps):
        src, dst, signs, alpha = generate_step_interactions(x, config, rng, params)
        act_v, act_a = generate_step_actions(x, latent.w, latent.sigma, config, rng, params)
        interactions.extend((t, actors[u], actors[v]) for u, v in zip(src, dst))
        actor_actions.extend((t, actors[v], actions[a]) for v, a in zip(act_v, act_a))
        all_signs.append(signs)
        alphas.append(alpha)
        x = propagate(x, [build_update_matrix(src, dst, signs, config.num_actors, params)])
        rows.append(x)

    trace = Trace(actors, actions, interactions, actor_actions, config.num_timesteps)
    latent.signs = np.concatenate(all_signs) if all_signs else np.zeros(0, dtype=np.int8)
    truth = GroundTruth(latent, np.vstack(rows), np.array(alphas))
    return trace, truth


def generate_traces(config, count):
    """``count`` traces with seeds ``config.seed``, ``config.seed + 1``, ..."""
    out = []
    for k in range(count):
        cfg = GenConfig(**{**config.__dict__, "seed": config.seed + k})
        out.append(generate_trace(cfg))
    return out


__all__ = ["GenConfig", "GroundTruth", "MacroParams", "generate_step_actions",
           "generate_step_interactions", "generate_trace", "generate_traces", "init_latent"]
