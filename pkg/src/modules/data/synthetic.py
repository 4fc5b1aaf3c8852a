import numpy as np
from typing import List, Sequence

from src.core.logger import logging
from src.core.types import ObservationWindow

logger = logging.getLogger(__name__)

MOTION_KINDS = ("constant_velocity", "constant_turn")


def _path(rng: np.random.Generator, kind: str, obs_len: int, pred_len: int) -> np.ndarray:
    """(obs_len + pred_len, 2) path through the origin at index obs_len - 1."""
    speed = rng.uniform(0.2, 0.6)  # units per step
    heading = rng.uniform(-np.pi, np.pi)
    turn = rng.uniform(-0.15, 0.15) if kind == "constant_turn" else 0.0
    steps = np.arange(obs_len + pred_len, dtype=np.float64)
    angles = heading + turn * steps
    deltas = speed * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    path = np.concatenate([np.zeros((1, 2)), np.cumsum(deltas[:-1], axis=0)])
    return path - path[obs_len - 1]


def synthetic_windows(n: int,
                      seed: int = 0,
                      kinds: Sequence[str] = MOTION_KINDS,
                      obs_len: int = 8,
                      pred_len: int = 12,
                      max_neighbors: int = 3,
                      max_dist: float = 10.0,
                      scene: str = "synthetic") -> List[ObservationWindow]:
    """
    Deterministic windows of analytic motion: each primary follows one of
    `kinds`; neighbors move at constant velocity with t=0 positions within
    max_dist. `anchor_frame` is the window index, so keys are unique.
    """
    unknown = set(kinds) - set(MOTION_KINDS)
    if unknown:
        raise ValueError(f"Unknown motion kinds: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    windows = []
    for i in range(n):
        kind = kinds[int(rng.integers(len(kinds)))]
        path = _path(rng, kind, obs_len, pred_len)
        origin = rng.uniform(-20.0, 20.0, size=2)
        n_neigh = int(rng.integers(max_neighbors + 1))
        histories, offsets = [], []
        for _ in range(n_neigh):
            radius = rng.uniform(0.5, 0.9 * max_dist)
            bearing = rng.uniform(-np.pi, np.pi)
            offsets.append(radius * np.array([np.cos(bearing), np.sin(bearing)]))
            histories.append(_path(rng, "constant_velocity", obs_len, pred_len)[:obs_len])
        history = path[:obs_len]
        windows.append(ObservationWindow(
            scene=scene,
            agent_id=i,
            anchor_frame=i,
            origin=origin,
            history=history,
            future=path[obs_len:],
            velocity=history[-1] - history[-2],
            neighbor_ids=[n + 1 + j for j in range(n_neigh)],
            neighbor_histories=np.asarray(histories, dtype=np.float64).reshape(n_neigh, obs_len, 2),
            neighbor_offsets=np.asarray(offsets, dtype=np.float64).reshape(n_neigh, 2),
        ))
    logger.debug(f"Generated {n} synthetic windows (seed {seed}, kinds {list(kinds)})")
    return windows
