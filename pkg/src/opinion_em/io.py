"""Trace files (TSV), result files (JSON) and anchors.

Layout of a trace directory::

    interactions.tsv   t  u  v     one row per interaction occurrence
    actions.tsv        t  v  a     one row per actor-action occurrence
    entities.tsv       kind  id    optional; full actor/action universes and,
                                   in a ``timesteps`` row, the step count

IDs are arbitrary non-empty strings without tabs. Without ``entities.tsv``
the universes are the IDs seen in the arc files.
"""
import csv
import json
import math
from pathlib import Path

import numpy as np

from .state import LatentState
from .trace import Trace, natural_key

INTERACTIONS_FILE = "interactions.tsv"
ACTIONS_FILE = "actions.tsv"
ENTITIES_FILE = "entities.tsv"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


def _read_tsv(path, columns):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\r\n").split("\t")
        if header != list(columns):
            raise DataError(f"{path}:1: expected header {'<TAB>'.join(columns)!r}, "
                            f"got {'<TAB>'.join(header)!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != len(columns):
                raise DataError(f"{path}:{lineno}: expected {len(columns)} columns, got {len(fields)}")
            for col, value in zip(columns, fields):
                if value == "":
                    raise DataError(f"{path}:{lineno}: empty value in column {col!r}")
            rows.append((lineno, fields))
    return rows


def _parse_step(path, lineno, value):
    try:
        t = int(value)
    except ValueError:
        raise DataError(f"{path}:{lineno}: column 't' must be an integer, got {value!r}") from None
    if t < 0:
        raise DataError(f"{path}:{lineno}: column 't' must be >= 0, got {t}")
    return t


def _write_tsv(path, columns, rows):
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def write_trace(trace, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_tsv(directory / INTERACTIONS_FILE, ("t", "u", "v"), trace.interaction_rows())
    _write_tsv(directory / ACTIONS_FILE, ("t", "v", "a"), trace.action_rows())
    _write_tsv(directory / ENTITIES_FILE, ("kind", "id"),
               [("actor", a) for a in trace.actors] + [("action", a) for a in trace.actions]
               + [("timesteps", trace.num_timesteps)])
    return [directory / INTERACTIONS_FILE, directory / ACTIONS_FILE, directory / ENTITIES_FILE]


def read_trace(directory, num_timesteps=None):
    """Load a trace directory written by :func:`write_trace` (or by hand)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: trace directory not found")
    int_path, act_path = directory / INTERACTIONS_FILE, directory / ACTIONS_FILE
    interactions = [(_parse_step(int_path, n, f[0]), f[1], f[2])
                    for n, f in _read_tsv(int_path, ("t", "u", "v"))]
    actor_actions = [(_parse_step(act_path, n, f[0]), f[1], f[2])
                     for n, f in _read_tsv(act_path, ("t", "v", "a"))]

    actors = actions = None
    ent_path = directory / ENTITIES_FILE
    if ent_path.exists():
        actors, actions = [], []
        for lineno, (kind, ident) in _read_tsv(ent_path, ("kind", "id")):
            if kind == "actor":
                actors.append(ident)
            elif kind == "action":
                actions.append(ident)
            elif kind == "timesteps" and num_timesteps is None:
                num_timesteps = _parse_step(ent_path, lineno, ident)
            elif kind != "timesteps":
                raise DataError(f"{ent_path}:{lineno}: kind must be 'actor', 'action' or "
                                f"'timesteps', got {kind!r}")
    try:
        return Trace.from_arcs(interactions, actor_actions, actors, actions, num_timesteps)
    except ValueError as exc:
        raise DataError(f"{directory}: {exc}") from None


def read_anchors(path, trace=None):
    """``a<TAB>w`` rows mapping action IDs to pinned positions in [-1, 1]."""
    anchors = {}
    for lineno, (action, value) in _read_tsv(path, ("a", "w")):
        try:
            w = float(value)
        except ValueError:
            raise DataError(f"{path}:{lineno}: column 'w' must be a number, got {value!r}") from None
        if not -1.0 <= w <= 1.0:
            raise DataError(f"{path}:{lineno}: anchor position {w} outside [-1, 1]")
        if trace is not None and action not in trace.action_index:
            raise DataError(f"{path}:{lineno}: anchor references unknown action {action!r}")
        anchors[action] = w
    return anchors


def write_json(path, payload):
    text = json.dumps(_plain(payload), sort_keys=True, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def latent_to_dict(trace, latent, trajectory=None):
    out = {
        "x0": dict(zip(trace.actors, latent.x0.tolist())),
        "w": dict(zip(trace.actions, latent.w.tolist())),
        "sigma": dict(zip(trace.actions, latent.sigma.tolist())),
        "signs": [[t, u, v, int(s)] for (t, u, v), s in zip(trace.interaction_rows(), latent.signs)],
    }
    if trajectory is not None:
        out["trajectory"] = {a: trajectory[:, i].tolist() for i, a in enumerate(trace.actors)}
    return out


def latent_from_dict(trace, payload, source="latent state"):
    """Rebuild a :class:`LatentState` aligned with ``trace`` from its JSON form."""
    def vector(key, ids):
        mapping = payload.get(key)
        if not isinstance(mapping, dict):
            raise DataError(f"{source}: missing {key!r}")
        extra = sorted(set(mapping) - set(ids), key=natural_key)
        if extra:
            raise DataError(f"{source}: {key} has unknown ID {extra[0]!r}")
        missing = [i for i in ids if i not in mapping]
        if missing:
            raise DataError(f"{source}: {key} is missing ID {missing[0]!r}")
        return np.array([mapping[i] for i in ids], dtype=float)

    x0 = vector("x0", trace.actors)
    w = vector("w", trace.actions)
    sigma = vector("sigma", trace.actions)
    rows = payload.get("signs", [])
    expected = trace.interaction_rows()
    if len(rows) != len(expected):
        raise DataError(f"{source}: {len(rows)} signs for {len(expected)} interactions")
    for k, (row, arc) in enumerate(zip(rows, expected)):
        if tuple(row[:3]) != arc:
            raise DataError(f"{source}: sign #{k} is for arc {tuple(row[:3])}, expected {arc}")
    signs = np.array([row[3] for row in rows], dtype=np.int8)
    return LatentState(x0, w, sigma, signs)


def truth_to_dict(trace, truth, params):
    out = latent_to_dict(trace, truth.latent, truth.trajectory)
    out["alpha_series"] = truth.alpha_series.tolist()
    out["params"] = vars(params)
    return out


def fit_to_dict(trace, result, params):
    out = latent_to_dict(trace, result.latent, result.trajectory)
    out.update(
        log_likelihood=result.log_likelihood,
        alpha_series=result.alpha_series.tolist(),
        restart_index=result.restart_index,
        restart_log_likelihoods=result.restart_log_likelihoods,
        epoch_log_likelihoods=result.epoch_log_likelihoods,
        params=vars(params),
    )
    return out
