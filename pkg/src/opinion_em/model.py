"""Opinion kernels, interaction/action probabilities and the opinion recursion.

Everything here is a pure function of its arguments. Opinions live in
[-1, 1]; actors and actions are addressed by integer index.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.special import expit, log_expit, logsumexp

HARD_STEEPNESS = 1e4


@dataclass(frozen=True)
class MacroParams:
    """Rule constants of the bounded-confidence model with backfire.

    ``eps_plus``/``eps_minus`` are the latitudes of acceptance and contrast,
    ``mu_plus``/``mu_minus`` the influence speeds and ``rho_g``/``rho_z`` the
    steepness of the interaction and action sigmoids.
    """

    eps_plus: float = 0.6
    eps_minus: float = 1.2
    mu_plus: float = 0.1
    mu_minus: float = 0.1
    rho_g: float = 8.0
    rho_z: float = 16.0

    def __post_init__(self):
        if not 0.0 <= self.eps_plus < self.eps_minus <= 2.0:
            raise ValueError(
                f"need 0 <= eps_plus < eps_minus <= 2, got "
                f"eps_plus={self.eps_plus}, eps_minus={self.eps_minus}")
        for name in ("mu_plus", "mu_minus", "rho_g", "rho_z"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value}")

    def hardened(self):
        """Same latitudes with near-step sigmoids (deterministic regime)."""
        return replace(self, rho_g=HARD_STEEPNESS, rho_z=HARD_STEEPNESS)


SCENARIO_LATITUDES = {
    "balanced": (0.6, 1.2),
    "high_contrast": (0.4, 0.6),
    "high_acceptance": (1.2, 1.6),
    "non_commitment": (0.2, 1.6),
}


@dataclass(frozen=True)
class Scenario:
    name: str
    params: MacroParams


def scenario(name, **overrides):
    """Build a named scenario preset; ``overrides`` replace non-latitude fields."""
    try:
        eps_plus, eps_minus = SCENARIO_LATITUDES[name]
    except KeyError:
        valid = ", ".join(SCENARIO_LATITUDES)
        raise ValueError(f"unknown scenario {name!r}; valid names: {valid}") from None
    return Scenario(name, MacroParams(eps_plus=eps_plus, eps_minus=eps_minus, **overrides))


def sigmoid(x, rho):
    return expit(rho * np.asarray(x, dtype=float))


def kappa_plus(x_u, x_v, params):
    return sigmoid(params.eps_plus - np.abs(np.subtract(x_u, x_v)), params.rho_g)


def kappa_minus(x_u, x_v, params):
    return sigmoid(np.abs(np.subtract(x_u, x_v)) - params.eps_minus, params.rho_g)


def kappa(sign, x_u, x_v, params):
    return kappa_plus(x_u, x_v, params) if sign > 0 else kappa_minus(x_u, x_v, params)


def kappa_sigma(x_v, w_a, sigma_a, params):
    return sigmoid(np.asarray(sigma_a) - np.abs(np.subtract(x_v, w_a)), params.rho_z)


def log_kappa(sign, x_u, x_v, params):
    dist = np.abs(np.subtract(x_u, x_v))
    z = params.eps_plus - dist if sign > 0 else dist - params.eps_minus
    return log_expit(params.rho_g * z)


def log_kappa_sigma(x_v, w_a, sigma_a, params):
    return log_expit(params.rho_z * (np.asarray(sigma_a) - np.abs(np.subtract(x_v, w_a))))


def compute_alpha(x, src, dst, params):
    """Fraction of strictly positive pairs among non-neutral pairs.

    Pairs with distance in the neutral band [eps_plus, eps_minus] are ignored.
    Returns 0.5 when no pair is strictly positive or negative.
    """
    x = np.asarray(x, dtype=float)
    dist = np.abs(x[np.asarray(src, dtype=int)] - x[np.asarray(dst, dtype=int)])
    pos = np.count_nonzero(dist < params.eps_plus)
    neg = np.count_nonzero(dist > params.eps_minus)
    if pos + neg == 0:
        return 0.5
    return pos / (pos + neg)


def compute_alpha_all_pairs(x, params):
    """``compute_alpha`` over every ordered pair of distinct actors."""
    x = np.asarray(x, dtype=float)
    dist = np.abs(x[:, None] - x[None, :])
    off_diag = ~np.eye(len(x), dtype=bool)
    pos = np.count_nonzero((dist < params.eps_plus) & off_diag)
    neg = np.count_nonzero((dist > params.eps_minus) & off_diag)
    if pos + neg == 0:
        return 0.5
    return pos / (pos + neg)


def update_opinions(x, signed_arcs, params):
    """One simultaneous step of the signed opinion update, clipped to [-1, 1].

    ``signed_arcs`` is an iterable of ``(u, v, sign)``; repeated arcs count
    once per occurrence. Every arc reads the pre-step snapshot of ``x``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    x_next = x.copy()
    for u, v, sign in signed_arcs:
        if not (0 <= u < n and 0 <= v < n):
            raise IndexError(f"actor index out of range in arc ({u}, {v})")
        if sign > 0:
            x_next[v] += params.mu_plus * (x[u] - x[v])
        else:
            x_next[v] -= params.mu_minus * (x[u] - x[v])
    return np.clip(x_next, -1.0, 1.0)


class SignedUpdateMatrix:
    """Sparse n x n matrix M(t) with M[u, v] = +-mu * multiplicity(u, v, t).

    The forward step accumulates the per-arc increments in arc order, which
    is the linear map ``(1 - M^T 1) * x + M^T x`` evaluated so that it rounds
    exactly like the per-arc update. ``in_weight`` caches the column sums
    (total signed weight received by each actor) for the backward pass.
    """

    def __init__(self, src, dst, weights, n_actors):
        self.src, self.dst, self.weights = src, dst, weights
        self.matrix = sparse.csr_matrix(
            sparse.coo_matrix((weights, (src, dst)), shape=(n_actors, n_actors)))
        self.in_weight = np.asarray(self.matrix.sum(axis=0)).ravel()

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self):
        return self.matrix.toarray()

    def step(self, x):
        """Unclipped ``(1 - M^T 1) * x + M^T x``."""
        out = np.array(x, dtype=float)
        np.add.at(out, self.dst, self.weights * (x[self.src] - x[self.dst]))
        return out

    def step_vjp(self, g):
        """Vector-Jacobian product of ``step``: ``(1 - M^T 1) * g + M g``."""
        return (1.0 - self.in_weight) * g + self.matrix @ g


def build_update_matrix(src, dst, signs, n_actors, params):
    """Assemble M(t) from the arcs of one timestep.

    ``src``, ``dst`` and ``signs`` are parallel sequences, one entry per
    arc occurrence; duplicates accumulate into the multiplicity.
    """
    src = np.asarray(src, dtype=int)
    dst = np.asarray(dst, dtype=int)
    signs = np.asarray(signs)
    if not (len(src) == len(dst) == len(signs)):
        raise ValueError("every arc needs exactly one sign")
    if len(signs) and not np.all(np.isin(signs, (-1, 1))):
        raise ValueError("arc signs must be -1 or +1; some arcs have no sign")
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n_actors):
        raise IndexError("arc endpoint outside the actor range")
    weights = np.where(signs > 0, params.mu_plus, -params.mu_minus).astype(float)
    return SignedUpdateMatrix(src, dst, weights, n_actors)


def propagate(x0, matrices, return_trajectory=False):
    """Apply the clipped recursion for M(0), ..., M(t-1) starting at ``x0``.

    With ``return_trajectory`` the full (t+1) x n array of opinions is
    returned instead of only the last row.
    """
    x = np.asarray(x0, dtype=float).copy()
    rows = [x]
    for m in matrices:
        if m.shape != (len(x), len(x)):
            raise ValueError(f"update matrix of shape {m.shape} does not match {len(x)} actors")
        x = np.clip(m.step(x), -1.0, 1.0)
        rows.append(x)
    if return_trajectory:
        return np.vstack(rows)
    return x


def propagate_with_masks(x0, matrices):
    """Forward pass that also records which coordinates were not clipped."""
    x = np.asarray(x0, dtype=float).copy()
    masks = []
    for m in matrices:
        raw = m.step(x)
        masks.append(np.abs(raw) <= 1.0)
        x = np.clip(raw, -1.0, 1.0)
    return x, masks


def backpropagate(grad_xt, matrices, masks):
    """Pull a gradient on x_t back to x_0; clipped coordinates pass nothing."""
    g = np.asarray(grad_xt, dtype=float)
    for m, mask in zip(reversed(matrices), reversed(masks)):
        g = m.step_vjp(np.where(mask, g, 0.0))
    return g


def link_probability(u, v, x, sign, eligible, params):
    """Probability that ``u`` picks ``v`` among ``eligible`` under ``sign``."""
    eligible = np.asarray(list(eligible), dtype=int)
    if eligible.size == 0:
        raise ValueError("eligible target set is empty")
    if v not in set(eligible.tolist()):
        raise ValueError(f"target {v} is not in the eligible set")
    x = np.asarray(x, dtype=float)
    log_norm = logsumexp(log_kappa(sign, x[u], x[eligible], params))
    return float(np.exp(log_kappa(sign, x[u], x[v], params) - log_norm))


def link_distribution(u, x, sign, eligible, params):
    """Normalized ``link_probability`` over the whole eligible set."""
    eligible = np.asarray(list(eligible), dtype=int)
    if eligible.size == 0:
        raise ValueError("eligible target set is empty")
    x = np.asarray(x, dtype=float)
    logits = log_kappa(sign, x[u], x[eligible], params)
    return np.exp(logits - logsumexp(logits))


def action_distribution(x_v, w, sigma, params):
    """Probabilities of every action for an actor at opinion ``x_v``."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        raise ValueError("action set is empty")
    logits = log_kappa_sigma(x_v, w, sigma, params)
    return np.exp(logits - logsumexp(logits))


def action_probability(v, a, x, w, sigma, params):
    return float(action_distribution(np.asarray(x, dtype=float)[v], w, sigma, params)[a])
