import re
import numpy as np
import pandas as pd
from dataclasses import dataclass
from pathlib import Path
from typing import List, Dict, Optional

from src.core.errors import ParseError, DataError
from src.core.logger import logging
from src.core.types import RawTrack, Unit

logger = logging.getLogger(__name__)

ETHUCY_SCENES = ("eth", "hotel", "univ", "zara1", "zara2")
SDD_FRAME_STRIDE = 12  # 30 Hz annotations, 0.4 s grid
SDD_COLUMNS = ("track_id", "xmin", "ymin", "xmax", "ymax", "frame", "lost", "occluded", "generated", "label")


@dataclass
class Recording:
    """One annotation file; agent ids are only unique within it."""
    scene: str
    name: str
    tracks: List[RawTrack]
    frame_step: int


def _as_int(token: str, what: str, line_number: int) -> int:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} '{token}' is not numeric", line_number)
    if not value.is_integer():
        raise ParseError(f"{what} '{token}' is not an integer", line_number)
    return int(value)


def _as_float(token: str, what: str, line_number: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} '{token}' is not numeric", line_number)
    if not np.isfinite(value):
        raise ParseError(f"{what} '{token}' is not finite", line_number)
    return value


def _tracks_from_rows(df: pd.DataFrame, unit: Unit) -> List[RawTrack]:
    if df.empty:
        return []
    dup = df.duplicated(["frame", "agent_id"], keep="first")
    if dup.any():
        row = df[dup].iloc[0]
        raise ParseError(
            f"duplicate observation for agent {int(row['agent_id'])} at frame {int(row['frame'])}",
            int(row["line"]),
        )
    df = df.sort_values(["agent_id", "frame"], kind="mergesort")
    tracks = []
    for agent_id, group in df.groupby("agent_id", sort=True):
        label = None
        if "label" in group.columns:
            label = str(group["label"].iloc[0])
        tracks.append(RawTrack(
            agent_id=int(agent_id),
            frames=group["frame"].to_numpy(dtype=np.int64),
            positions=group[["x", "y"]].to_numpy(dtype=np.float64),
            unit=unit,
            label=label,
        ))
    return tracks


def parse_ethucy(text: str) -> List[RawTrack]:
    """
    Parses `frame_id agent_id x y` rows (meters, 2.5 Hz grid).
    Integer-valued floats such as `780.0` are accepted for ids.
    """
    rows = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 4:
            raise ParseError(f"expected 4 columns, got {len(tokens)}", line_number)
        rows.append({
            "frame": _as_int(tokens[0], "frame_id", line_number),
            "agent_id": _as_int(tokens[1], "agent_id", line_number),
            "x": _as_float(tokens[2], "x", line_number),
            "y": _as_float(tokens[3], "y", line_number),
            "line": line_number,
        })
    return _tracks_from_rows(pd.DataFrame(rows), unit="meters")


def parse_sdd(text: str, frame_stride: int = SDD_FRAME_STRIDE) -> List[RawTrack]:
    """
    Parses SDD `annotations.txt`: bounding-box centers in pixels, `lost` rows
    dropped, frames downsampled to multiples of `frame_stride`.
    """
    rows = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != len(SDD_COLUMNS):
            raise ParseError(f"expected {len(SDD_COLUMNS)} columns, got {len(tokens)}", line_number)
        track_id = _as_int(tokens[0], "track_id", line_number)
        xmin, ymin, xmax, ymax = (_as_float(t, name, line_number)
                                  for t, name in zip(tokens[1:5], SDD_COLUMNS[1:5]))
        frame = _as_int(tokens[5], "frame", line_number)
        lost = _as_int(tokens[6], "lost", line_number)
        if xmax < xmin or ymax < ymin:
            raise ParseError(f"inverted bounding box ({xmin}, {ymin}, {xmax}, {ymax})", line_number)
        rows.append({
            "frame": frame,
            "agent_id": track_id,
            "x": (xmin + xmax) / 2.0,
            "y": (ymin + ymax) / 2.0,
            "lost": lost,
            "label": tokens[9].strip('"'),
            "line": line_number,
        })
    df = pd.DataFrame(rows)
    if df.empty:
        return []
    df = df[df["lost"] != 1]
    df = df[df["frame"] % frame_stride == 0]
    return _tracks_from_rows(df, unit="pixels")


def infer_frame_step(tracks: List[RawTrack]) -> int:
    """Modal positive frame difference within tracks (ETH 6, UCY 10, SDD 12)."""
    diffs = [np.diff(t.frames) for t in tracks if len(t) > 1]
    if not diffs:
        return 1
    all_diffs = np.concatenate(diffs)
    all_diffs = all_diffs[all_diffs > 0]
    if all_diffs.size == 0:
        return 1
    values, counts = np.unique(all_diffs, return_counts=True)
    return int(values[np.argmax(counts)])


def load_ethucy(root: Path, scenes: Optional[List[str]] = None) -> Dict[str, List[Recording]]:
    """Layout: `<root>/<scene>/*.txt`, one recording per file."""
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"ETH/UCY root not found: {root}")
    dataset: Dict[str, List[Recording]] = {}
    for scene in scenes or ETHUCY_SCENES:
        scene_dir = root / scene
        if not scene_dir.is_dir():
            raise DataError(f"ETH/UCY scene directory missing: {scene_dir}")
        recordings = []
        for path in sorted(scene_dir.glob("*.txt")):
            tracks = parse_ethucy(path.read_text(encoding="utf-8"))
            recordings.append(Recording(scene=scene, name=path.stem, tracks=tracks,
                                        frame_step=infer_frame_step(tracks)))
            logger.info(f"Parsed {path.name}: {len(tracks)} tracks (frame step {recordings[-1].frame_step})")
        dataset[scene] = recordings
    return dataset


def sdd_key(annotation_path: Path) -> str:
    """`.../<scene>/video<N>/annotations.txt` -> `<scene>_<N>`."""
    match = re.search(r"(\d+)$", annotation_path.parent.name)
    video = match.group(1) if match else annotation_path.parent.name
    return f"{annotation_path.parent.parent.name}_{video}"


def load_sdd(root: Path, frame_stride: int = SDD_FRAME_STRIDE) -> Dict[str, List[Recording]]:
    """Layout: `<root>/annotations/<scene>/video<N>/annotations.txt`, keyed `<scene>_<N>`."""
    annotations = Path(root) / "annotations"
    if not annotations.exists():
        raise FileNotFoundError(f"SDD annotations directory not found: {annotations}")
    dataset: Dict[str, List[Recording]] = {}
    for path in sorted(annotations.glob("*/*/annotations.txt")):
        key = sdd_key(path)
        tracks = parse_sdd(path.read_text(encoding="utf-8"), frame_stride)
        dataset[key] = [Recording(scene=key, name=key, tracks=tracks, frame_step=frame_stride)]
        logger.info(f"Parsed SDD {key}: {len(tracks)} tracks")
    return dataset
