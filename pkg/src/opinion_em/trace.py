"""Observed temporal multigraphs: actor-actor interactions and actor-action arcs."""
import re

import numpy as np


def natural_key(label):
    """Sort key that orders ``u2`` before ``u10``."""
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", label)]


class Trace:
    """Interactions ``(t, u, v)`` and actions ``(t, v, a)`` over ``num_timesteps`` steps.

    Actor and action IDs are strings. Internally every arc is stored as
    integer indices into ``actors``/``actions``; arcs are kept sorted by
    timestep (stable), one row per occurrence.

    Parameters
    ----------
    actors, actions : sequence of str
        The universes V and A. Their order defines the index order.
    interactions : sequence of (t, u, v)
    actor_actions : sequence of (t, v, a)
    num_timesteps : int, optional
        Defaults to one past the largest observed timestep.
    """

    def __init__(self, actors, actions, interactions=(), actor_actions=(), num_timesteps=None):
        self.actors = tuple(str(a) for a in actors)
        self.actions = tuple(str(a) for a in actions)
        self.actor_index = {a: i for i, a in enumerate(self.actors)}
        self.action_index = {a: i for i, a in enumerate(self.actions)}
        if len(self.actor_index) != len(self.actors):
            raise ValueError("duplicate actor IDs")
        if len(self.action_index) != len(self.actions):
            raise ValueError("duplicate action IDs")

        int_t, int_u, int_v = self._encode(interactions, self.actor_index, self.actor_index,
                                           "actor", "actor")
        if np.any(int_u == int_v):
            k = int(np.flatnonzero(int_u == int_v)[0])
            raise ValueError(f"self-interaction of actor {self.actors[int_u[k]]!r} "
                             f"at t={int_t[k]} is not supported")
        act_t, act_v, act_a = self._encode(actor_actions, self.actor_index, self.action_index,
                                           "actor", "action")

        last = max([-1, *int_t.tolist()[-1:], *act_t.tolist()[-1:]])
        if num_timesteps is None:
            num_timesteps = last + 1
        if num_timesteps <= last:
            raise ValueError(f"timestep {last} outside [0, {num_timesteps})")
        self.num_timesteps = int(num_timesteps)

        self.int_t, self.int_u, self.int_v = int_t, int_u, int_v
        self.act_t, self.act_v, self.act_a = act_t, act_v, act_a
        steps = np.arange(self.num_timesteps + 1)
        self._int_bounds = np.searchsorted(int_t, steps)
        self._act_bounds = np.searchsorted(act_t, steps)

    @staticmethod
    def _encode(rows, left_index, right_index, left_kind, right_kind):
        rows = list(rows)
        t = np.empty(len(rows), dtype=np.int64)
        left = np.empty(len(rows), dtype=np.int64)
        right = np.empty(len(rows), dtype=np.int64)
        for k, (step, a, b) in enumerate(rows):
            step = int(step)
            if step < 0:
                raise ValueError(f"negative timestep {step}")
            try:
                left[k] = left_index[str(a)]
            except KeyError:
                raise ValueError(f"unknown {left_kind} ID {a!r}") from None
            try:
                right[k] = right_index[str(b)]
            except KeyError:
                raise ValueError(f"unknown {right_kind} ID {b!r}") from None
            t[k] = step
        order = np.argsort(t, kind="stable")
        return t[order], left[order], right[order]

    @classmethod
    def from_arcs(cls, interactions, actor_actions=(), actors=None, actions=None,
                  num_timesteps=None):
        """Build a trace, inferring missing universes from the arcs (natural order)."""
        interactions = list(interactions)
        actor_actions = list(actor_actions)
        if actors is None:
            seen = {str(x) for _, u, v in interactions for x in (u, v)}
            seen |= {str(v) for _, v, _ in actor_actions}
            actors = sorted(seen, key=natural_key)
        if actions is None:
            actions = sorted({str(a) for _, _, a in actor_actions}, key=natural_key)
        return cls(actors, actions, interactions, actor_actions, num_timesteps)

    @property
    def n_actors(self):
        return len(self.actors)

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def n_interactions(self):
        return len(self.int_t)

    @property
    def n_actor_actions(self):
        return len(self.act_t)

    def interaction_slice(self, t):
        """Positions (into the interaction arrays) of the arcs at timestep ``t``."""
        return slice(self._int_bounds[t], self._int_bounds[t + 1])

    def action_slice(self, t):
        return slice(self._act_bounds[t], self._act_bounds[t + 1])

    def interactions_at(self, t):
        sl = self.interaction_slice(t)
        return self.int_u[sl], self.int_v[sl]

    def actions_at(self, t):
        sl = self.action_slice(t)
        return self.act_v[sl], self.act_a[sl]

    def interaction_rows(self):
        """``(t, u, v)`` tuples with string IDs, in storage order."""
        return [(int(t), self.actors[u], self.actors[v])
                for t, u, v in zip(self.int_t, self.int_u, self.int_v)]

    def action_rows(self):
        return [(int(t), self.actors[v], self.actions[a])
                for t, v, a in zip(self.act_t, self.act_v, self.act_a)]

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (self.actors == other.actors and self.actions == other.actions
                and self.num_timesteps == other.num_timesteps
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("int_t", "int_u", "int_v", "act_t", "act_v", "act_a")))

    def __repr__(self):
        return (f"Trace(actors={self.n_actors}, actions={self.n_actions}, "
                f"T={self.num_timesteps}, interactions={self.n_interactions}, "
                f"actor_actions={self.n_actor_actions})")
