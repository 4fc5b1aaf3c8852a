import hashlib
from pathlib import Path
from typing import List, Optional, Tuple

from src.core.errors import ConfigurationError
from src.core.logger import logging
from src.core.models import RunConfig, stable_hash
from src.core.types import ObservationWindow
from src.modules.data.cache import WindowCache
from src.modules.data.parsers import load_ethucy, load_sdd, sdd_key
from src.modules.data.splits import WindowSet, windows_by_scene, leave_one_out_split, sdd_split
from src.modules.data.synthetic import synthetic_windows

logger = logging.getLogger(__name__)

UNITS = {"ethucy": "meters", "sdd": "pixels", "synthetic": "meters"}
# ETH/UCY averages the five scene means; SDD reports one aggregate over all windows
AVERAGING = {"ethucy": "scene_mean", "sdd": "sample_mean", "synthetic": "scene_mean"}
SYNTHETIC_TEST_WINDOWS = 500


def dataset_root(run_config: RunConfig) -> Path:
    if run_config.data_root:
        return Path(run_config.data_root)
    return Path(run_config.data.root or f"datasets/{run_config.dataset}")


def data_hash(run_config: RunConfig) -> str:
    """SHA-256 over every annotation file under the dataset root (sorted paths), or the synthetic parameters."""
    if run_config.dataset == "synthetic":
        return stable_hash({"synthetic": run_config.data.synthetic_windows, "seed": run_config.seed,
                            "test": SYNTHETIC_TEST_WINDOWS})
    root = dataset_root(run_config)
    if not root.exists():
        raise FileNotFoundError(f"Dataset root not found: {root}")
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*.txt") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()


def load_windows(run_config: RunConfig, cache: Optional[WindowCache] = None) -> WindowSet:
    """Windows per scene (ETH/UCY) or per video (SDD), through the window cache when given."""
    data = run_config.data
    if run_config.dataset == "synthetic":
        return {"synthetic": synthetic_windows(data.synthetic_windows, seed=run_config.seed,
                                               obs_len=data.obs_len, pred_len=data.pred_len,
                                               max_dist=data.max_distance, scene="synthetic-train")}
    root = dataset_root(run_config)
    params = {**data.window_params(), "dataset": run_config.dataset, "data_hash": run_config.data_hash}

    def build() -> WindowSet:
        if run_config.dataset == "ethucy":
            recordings = load_ethucy(root, data.scenes)
        else:
            recordings = load_sdd(root, data.frame_stride)
        return windows_by_scene(recordings, data.obs_len, data.pred_len, data.max_distance, data.anchor_stride)

    if cache is None:
        return build()
    built: Optional[WindowSet] = None
    keys = _scene_keys(run_config, root)
    out: WindowSet = {}
    for key in keys:
        def scene_builder(key=key) -> List[ObservationWindow]:
            nonlocal built
            if built is None:
                built = build()
            return built.get(key, [])
        out[key] = cache.load_or_build(f"{run_config.dataset}_{key}", {**params, "scene": key}, scene_builder)
    return out


def _scene_keys(run_config: RunConfig, root: Path) -> List[str]:
    if run_config.dataset == "ethucy":
        return list(run_config.data.scenes)
    annotations = root / "annotations"
    if not annotations.exists():
        raise FileNotFoundError(f"SDD annotations directory not found: {annotations}")
    return [sdd_key(path) for path in sorted(annotations.glob("*/*/annotations.txt"))]


def split_windows(run_config: RunConfig, dataset_windows: WindowSet,
                  holdout: Optional[str] = None) -> Tuple[List[ObservationWindow], List[ObservationWindow]]:
    """(train, test) for the run's protocol."""
    if run_config.dataset == "synthetic":
        data = run_config.data
        test = synthetic_windows(SYNTHETIC_TEST_WINDOWS, seed=run_config.seed + 1,
                                 obs_len=data.obs_len, pred_len=data.pred_len, max_dist=data.max_distance)
        return list(dataset_windows["synthetic"]), test
    if run_config.dataset == "sdd":
        return sdd_split(dataset_windows, run_config.data.test_videos)
    holdout = holdout or run_config.holdout
    if not holdout:
        raise ConfigurationError("ETH/UCY runs need --holdout <scene> (or 'all' for train)")
    return leave_one_out_split(dataset_windows, holdout)
