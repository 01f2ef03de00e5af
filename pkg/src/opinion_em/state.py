"""Latent variables of the model and helpers that rebuild opinions from them."""
from dataclasses import dataclass, field

import numpy as np

from .model import build_update_matrix, propagate


@dataclass
class LatentState:
    """Initial opinions, action centers/half-widths and one sign per interaction.

    ``signs`` is aligned with the interaction storage order of the trace it
    belongs to; 0 marks an arc whose sign has not been assigned yet.
    """

    x0: np.ndarray
    w: np.ndarray
    sigma: np.ndarray
    signs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.signs = np.asarray(self.signs, dtype=np.int8)
        if np.any(np.abs(self.x0) > 1) or np.any(np.abs(self.w) > 1):
            raise ValueError("opinions and action centers must lie in [-1, 1]")
        if np.any(self.sigma <= 0):
            raise ValueError("action half-widths must be positive")
        if self.w.shape != self.sigma.shape:
            raise ValueError("w and sigma must have the same length")

    def copy(self):
        return LatentState(self.x0.copy(), self.w.copy(), self.sigma.copy(), self.signs.copy())

    def flipped(self):
        """Mirror image: opinions and action centers negated."""
        return LatentState(-self.x0, -self.w, self.sigma.copy(), self.signs.copy())


def update_matrices(trace, signs, params, upto=None):
    """M(0), ..., M(upto - 1) for ``trace`` under ``signs``."""
    upto = trace.num_timesteps if upto is None else upto
    matrices = []
    for t in range(upto):
        sl = trace.interaction_slice(t)
        matrices.append(build_update_matrix(trace.int_u[sl], trace.int_v[sl], signs[sl],
                                            trace.n_actors, params))
    return matrices


def opinion_trajectory(trace, latent, params):
    """(T + 1) x n opinions x_0 ... x_T implied by ``latent``."""
    if len(latent.signs) != trace.n_interactions:
        raise ValueError(f"{len(latent.signs)} signs for {trace.n_interactions} interactions")
    return propagate(latent.x0, update_matrices(trace, latent.signs, params),
                     return_trajectory=True)
