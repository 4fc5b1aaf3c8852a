import json
import numpy as np
from pathlib import Path
from typing import Callable, Dict, List, Optional, Any

from src.core.config import config
from src.core.logger import logging
from src.core.models import WindowRecord, stable_hash
from src.core.types import ObservationWindow

logger = logging.getLogger(__name__)

CACHE_FORMAT = "observation-windows"
CACHE_VERSION = 1


def window_to_record(window: ObservationWindow) -> WindowRecord:
    return WindowRecord(
        scene=window.scene,
        agent_id=window.agent_id,
        anchor_frame=window.anchor_frame,
        origin=window.origin.tolist(),
        history=window.history.tolist(),
        future=window.future.tolist(),
        velocity=window.velocity.tolist(),
        neighbor_ids=list(window.neighbor_ids),
        neighbor_histories=window.neighbor_histories.tolist(),
        neighbor_offsets=window.neighbor_offsets.tolist(),
    )


def record_to_window(record: WindowRecord) -> ObservationWindow:
    obs_len = len(record.history)
    n = len(record.neighbor_ids)
    return ObservationWindow(
        scene=record.scene,
        agent_id=record.agent_id,
        anchor_frame=record.anchor_frame,
        origin=np.asarray(record.origin, dtype=np.float64),
        history=np.asarray(record.history, dtype=np.float64),
        future=np.asarray(record.future, dtype=np.float64),
        velocity=np.asarray(record.velocity, dtype=np.float64),
        neighbor_ids=list(record.neighbor_ids),
        neighbor_histories=np.asarray(record.neighbor_histories, dtype=np.float64).reshape(n, obs_len, 2),
        neighbor_offsets=np.asarray(record.neighbor_offsets, dtype=np.float64).reshape(n, 2),
    )


class WindowCache:
    """
    JSON-lines window store. Line 1 is a header carrying the preprocessing
    parameters and their hash; a stale or foreign header means rebuild.
    """

    def __init__(self, cache_dir: Optional[Path] = None):
        self.cache_dir = Path(cache_dir or config.data.get("cache_dir") or "data/cache")
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def path_for(self, name: str) -> Path:
        safe = name.replace("/", "_")
        return self.cache_dir / f"windows_{safe}.jsonl"

    def save(self, path: Path, windows: List[ObservationWindow], params: Dict[str, Any]):
        header = {
            "format": CACHE_FORMAT,
            "version": CACHE_VERSION,
            "params_hash": stable_hash(params),
            "params": params,
        }
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for w in windows:
                f.write(window_to_record(w).model_dump_json() + "\n")
        logger.info(f"Saved {len(windows)} windows to cache: {path}")

    def load(self, path: Path, params: Dict[str, Any]) -> Optional[List[ObservationWindow]]:
        """Returns None when the file is missing or was built with other parameters."""
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as f:
            first = f.readline()
            try:
                header = json.loads(first)
            except json.JSONDecodeError:
                logger.warning(f"Unreadable cache header in {path}, rebuilding")
                return None
            if (header.get("format") != CACHE_FORMAT
                    or header.get("version") != CACHE_VERSION
                    or header.get("params_hash") != stable_hash(params)):
                logger.info(f"Cache {path} is stale, rebuilding")
                return None
            windows = [record_to_window(WindowRecord.model_validate_json(line)) for line in f if line.strip()]
        logger.info(f"Loaded {len(windows)} windows from cache: {path}")
        return windows

    def load_or_build(self, name: str, params: Dict[str, Any],
                      builder: Callable[[], List[ObservationWindow]]) -> List[ObservationWindow]:
        path = self.path_for(name)
        cached = self.load(path, params)
        if cached is not None:
            return cached
        windows = builder()
        self.save(path, windows, params)
        return windows
