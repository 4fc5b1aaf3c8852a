import dataclasses
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from typing import List, Optional

from src.core.logger import logging
from src.core.types import RawTrack, Scene, ObservationWindow
from src.modules.data.parsers import infer_frame_step

logger = logging.getLogger(__name__)


def _position_grid(tracks: List[RawTrack], frame_step: int):
    """
    Dense (grid_len, n_agents, 2) array, NaN where an agent is absent.
    Frames off the common grid are dropped.
    """
    start = int(min(t.frames[0] for t in tracks))
    stop = int(max(t.frames[-1] for t in tracks))
    grid = np.arange(start, stop + 1, frame_step, dtype=np.int64)
    positions = np.full((len(grid), len(tracks), 2), np.nan)
    dropped = 0
    for a, track in enumerate(tracks):
        on_grid = (track.frames - start) % frame_step == 0
        dropped += int((~on_grid).sum())
        idx = (track.frames[on_grid] - start) // frame_step
        positions[idx, a] = track.positions[on_grid]
    if dropped:
        logger.debug(f"Dropped {dropped} off-grid observations (step {frame_step})")
    return grid, positions


def build_windows(tracks: List[RawTrack],
                  obs_len: int = 8,
                  pred_len: int = 12,
                  max_dist: float = 10.0,
                  scene_name: str = "scene",
                  frame_step: Optional[int] = None,
                  anchor_stride: int = 1) -> List[ObservationWindow]:
    """
    One window per (agent, anchor) with obs_len + pred_len consecutive grid
    frames. Neighbors need the full observation span and a t=0 distance
    within max_dist. Output order: anchor frame, then agent id.
    """
    tracks = sorted((t for t in tracks if len(t) > 0), key=lambda t: t.agent_id)
    if not tracks:
        return []
    frame_step = frame_step or infer_frame_step(tracks)
    grid, positions = _position_grid(tracks, frame_step)
    span = obs_len + pred_len
    if len(grid) < span:
        return []

    present = np.isfinite(positions[..., 0])  # (G, A)
    # (G - span + 1, A, span): window starting at grid index s
    windows_present = sliding_window_view(present, span, axis=0)
    full_span = windows_present.all(axis=-1)
    obs_span = windows_present[..., :obs_len].all(axis=-1)

    ids = np.array([t.agent_id for t in tracks], dtype=np.int64)
    out: List[ObservationWindow] = []
    for s in range(0, full_span.shape[0], anchor_stride):
        primaries = np.flatnonzero(full_span[s])
        if primaries.size == 0:
            continue
        a = s + obs_len - 1  # grid index of t=0
        candidates = np.flatnonzero(obs_span[s])
        cand_pos = positions[a, candidates]
        for i in primaries:
            origin = positions[a, i].copy()
            history = positions[s:a + 1, i] - origin
            future = positions[a + 1:a + 1 + pred_len, i] - origin
            offsets = cand_pos - origin
            keep = (candidates != i) & (np.linalg.norm(offsets, axis=-1) <= max_dist)
            neigh = candidates[keep]
            neighbor_histories = positions[s:a + 1, neigh].transpose(1, 0, 2) - positions[a, neigh][:, None, :]
            out.append(ObservationWindow(
                scene=scene_name,
                agent_id=int(ids[i]),
                anchor_frame=int(grid[a]),
                origin=origin,
                history=history,
                future=future,
                velocity=history[-1] - history[-2],
                neighbor_ids=[int(x) for x in ids[neigh]],
                neighbor_histories=neighbor_histories.reshape(len(neigh), obs_len, 2),
                neighbor_offsets=offsets[keep].reshape(len(neigh), 2),
            ))
    return out


def build_scene(tracks: List[RawTrack],
                anchor_frame: int,
                obs_len: int = 8,
                pred_len: int = 12,
                frame_step: Optional[int] = None,
                dataset_name: str = "scene") -> Scene:
    """Restricts every track to the obs_len + pred_len grid around anchor_frame."""
    frame_step = frame_step or infer_frame_step(tracks)
    grid = anchor_frame + frame_step * np.arange(-(obs_len - 1), pred_len + 1, dtype=np.int64)
    restricted = []
    for track in tracks:
        mask = np.isin(track.frames, grid)
        if mask.any():
            restricted.append(dataclasses.replace(
                track, frames=track.frames[mask], positions=track.positions[mask]))
    return Scene(dataset_name=dataset_name, anchor_frame=int(anchor_frame), frame_step=frame_step,
                 frame_grid=grid, agent_tracks=restricted)


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def augment_rotation(window: ObservationWindow, angle: float) -> ObservationWindow:
    """
    Rotates every normalized quantity about the origin. `origin` keeps the
    world position, so rotated windows are for training only.
    """
    rot = rotation_matrix(angle)
    return dataclasses.replace(
        window,
        history=window.history @ rot.T,
        future=window.future @ rot.T,
        velocity=window.velocity @ rot.T,
        neighbor_histories=window.neighbor_histories @ rot.T,
        neighbor_offsets=window.neighbor_offsets @ rot.T,
    )
