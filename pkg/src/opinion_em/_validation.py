"""Input checks shared by the estimator and the command line."""
import numbers
from pathlib import Path

from .trace import Trace


def check_trace(X):
    """Accept a :class:`Trace`, a trace directory, or ``(interactions, actor_actions)``."""
    if isinstance(X, Trace):
        return X
    if isinstance(X, (str, Path)):
        from .io import read_trace
        return read_trace(X)
    if isinstance(X, tuple) and len(X) == 2:
        return Trace.from_arcs(X[0], X[1])
    raise TypeError(f"expected a Trace, a trace directory or (interactions, actions); got {type(X).__name__}")


def check_scalar(value, name, target_type=numbers.Real, min_val=None, max_val=None,
                 include_min=True, include_max=True):
    """Type and range check for one hyperparameter; returns the value unchanged."""
    if isinstance(value, bool) or not isinstance(value, target_type):
        raise TypeError(f"{name} must be {target_type.__name__}, got {type(value).__name__}")
    if min_val is not None and (value < min_val or (value == min_val and not include_min)):
        bound = ">=" if include_min else ">"
        raise ValueError(f"{name} must be {bound} {min_val}, got {value}")
    if max_val is not None and (value > max_val or (value == max_val and not include_max)):
        bound = "<=" if include_max else "<"
        raise ValueError(f"{name} must be {bound} {max_val}, got {value}")
    return value

