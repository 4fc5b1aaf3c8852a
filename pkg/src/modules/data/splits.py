import math
from collections import defaultdict
from typing import Dict, List, Tuple, Iterable

from src.core.errors import DataError
from src.core.logger import logging
from src.core.types import ObservationWindow
from src.modules.data.parsers import Recording, ETHUCY_SCENES
from src.modules.data.windows import build_windows

logger = logging.getLogger(__name__)

WindowSet = Dict[str, List[ObservationWindow]]


def recording_label(recording: Recording) -> str:
    """Window scene label; recordings sharing a scene get `scene/name` so keys stay unique."""
    if recording.name == recording.scene:
        return recording.scene
    return f"{recording.scene}/{recording.name}"


def scene_of(label: str) -> str:
    return label.split("/", 1)[0]


def windows_by_scene(dataset: Dict[str, List[Recording]],
                     obs_len: int = 8,
                     pred_len: int = 12,
                     max_dist: float = 10.0,
                     anchor_stride: int = 1) -> WindowSet:
    """Runs build_windows per recording; scenes and recordings in sorted order."""
    out: WindowSet = {}
    for scene in sorted(dataset):
        windows: List[ObservationWindow] = []
        for recording in dataset[scene]:
            windows.extend(build_windows(
                recording.tracks,
                obs_len=obs_len,
                pred_len=pred_len,
                max_dist=max_dist,
                scene_name=recording_label(recording),
                frame_step=recording.frame_step,
                anchor_stride=anchor_stride,
            ))
        out[scene] = windows
        logger.info(f"Scene {scene}: {len(windows)} windows")
    return out


def _normalize_scene(name: str, available: Iterable[str]) -> str:
    lookup = {s.lower(): s for s in available}
    key = name.lower()
    if key not in lookup:
        raise DataError(f"Unknown scene '{name}'. Available: {sorted(lookup.values())}")
    return lookup[key]


def leave_one_out_split(dataset: WindowSet, held_out_scene: str) -> Tuple[List[ObservationWindow], List[ObservationWindow]]:
    """Train on every other scene, test on `held_out_scene` (case-insensitive)."""
    held_out = _normalize_scene(held_out_scene, dataset.keys())
    train = [w for scene in sorted(dataset) if scene != held_out for w in dataset[scene]]
    test = list(dataset[held_out])
    logger.info(f"Leave-one-out '{held_out}': {len(train)} train / {len(test)} test windows")
    return train, test


def ethucy_holdouts(dataset: WindowSet) -> List[str]:
    return [s for s in ETHUCY_SCENES if s in dataset]


def sdd_split(dataset: WindowSet, test_videos: Iterable[str]) -> Tuple[List[ObservationWindow], List[ObservationWindow]]:
    """Fixed video-level partition; every listed test video must be present."""
    test_videos = set(test_videos)
    missing = sorted(test_videos - set(dataset))
    if missing:
        raise DataError(f"SDD test videos missing from dataset: {missing}")
    train = [w for key in sorted(dataset) if key not in test_videos for w in dataset[key]]
    test = [w for key in sorted(dataset) if key in test_videos for w in dataset[key]]
    logger.info(f"SDD split: {len(train)} train / {len(test)} test windows")
    return train, test


def validation_split(windows: List[ObservationWindow], fraction: float = 0.1) -> Tuple[List[ObservationWindow], List[ObservationWindow]]:
    """
    Holds out the latest `fraction` of anchor frames of every recording, so
    validation is a contiguous block of scene time rather than a shuffle.
    """
    if fraction <= 0:
        return list(windows), []
    anchors = defaultdict(set)
    for w in windows:
        anchors[w.scene].add(w.anchor_frame)
    cutoff = {}
    for label, frames in anchors.items():
        ordered = sorted(frames)
        n_val = math.ceil(len(ordered) * fraction)
        cutoff[label] = ordered[len(ordered) - n_val] if n_val else None
    train, val = [], []
    for w in windows:
        c = cutoff[w.scene]
        (val if c is not None and w.anchor_frame >= c else train).append(w)
    return train, val
