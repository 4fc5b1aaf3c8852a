import json
import math
import numpy as np
import pandas as pd
from pathlib import Path
from typing import Dict, Any, List, Optional, Tuple

from src.core.errors import DataError
from src.core.models import MetricsReport, SceneMetrics
from src.core.types import ObservationWindow, ModalityPrediction
from src.modules.data.splits import scene_of


def _check_finite(pred: np.ndarray, gt: np.ndarray):
    if not (np.isfinite(pred).all() and np.isfinite(gt).all()):
        raise ValueError("ade_fde received non-finite values")


def batch_ade_fde(pred: np.ndarray, gt: np.ndarray, joint_min: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Best-of-K displacement errors with unsquared Euclidean distances.
    pred (N, K, T, 2), gt (N, T, 2) -> ade (N,), fde (N,). By default the
    ADE and FDE minima pick their modality independently; `joint_min` uses
    the ADE-best modality for FDE too.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_finite(pred, gt)
    dist = np.linalg.norm(pred - gt[:, None], axis=-1)  # (N, K, T)
    ade_k = dist.mean(axis=-1)
    fde_k = dist[..., -1]
    ade = ade_k.min(axis=-1)
    if joint_min:
        best = ade_k.argmin(axis=-1)
        fde = np.take_along_axis(fde_k, best[:, None], axis=-1)[:, 0]
    else:
        fde = fde_k.min(axis=-1)
    return ade, fde


def ade_fde(pred: np.ndarray, gt: np.ndarray, joint_min: bool = False) -> Tuple[float, float]:
    """Single sample: pred (K, T, 2), gt (T, 2)."""
    ade, fde = batch_ade_fde(np.asarray(pred)[None], np.asarray(gt)[None], joint_min)
    return float(ade[0]), float(fde[0])


class MetricsEngine:
    """
    Per-sample errors in a DataFrame (scene, agent_id, anchor_frame, ade, fde);
    reductions use math.fsum so results do not depend on sample order.
    """

    def __init__(self, samples: pd.DataFrame):
        self.samples = samples

    @classmethod
    def from_predictions(cls, windows: List[ObservationWindow], predictions: List[ModalityPrediction],
                         joint_min: bool = False) -> "MetricsEngine":
        if len(windows) != len(predictions):
            raise DataError(f"{len(windows)} windows but {len(predictions)} predictions")
        if not windows:
            return cls(pd.DataFrame(columns=["scene", "agent_id", "anchor_frame", "ade", "fde"]))
        k = {p.k for p in predictions}
        if len(k) > 1:
            raise DataError(f"Predictions carry mixed modality counts: {sorted(k)}")
        pred = np.stack([p.trajectories for p in predictions])
        gt = np.stack([w.future for w in windows])
        ade, fde = batch_ade_fde(pred, gt, joint_min)
        return cls(pd.DataFrame({
            "scene": [scene_of(w.scene) for w in windows],
            "agent_id": [w.agent_id for w in windows],
            "anchor_frame": [w.anchor_frame for w in windows],
            "ade": ade,
            "fde": fde,
        }))

    def per_scene(self) -> Dict[str, SceneMetrics]:
        out = {}
        for scene, group in self.samples.groupby("scene", sort=True):
            n = len(group)
            out[str(scene)] = SceneMetrics(
                ade=math.fsum(group["ade"]) / n,
                fde=math.fsum(group["fde"]) / n,
                samples=n,
            )
        return out

    def report(self, dataset: str, unit: str, k: int, joint_min: bool = False,
               average: str = "scene_mean", param_count: Optional[int] = None,
               flop_estimate: Optional[int] = None) -> MetricsReport:
        """`average`: "scene_mean" (unweighted over scenes) or "sample_mean" (flat over windows)."""
        if self.samples.empty:
            raise DataError("Cannot evaluate an empty test set")
        scenes = self.per_scene()
        n = len(self.samples)
        if average == "scene_mean":
            avg_ade = math.fsum(s.ade for s in scenes.values()) / len(scenes)
            avg_fde = math.fsum(s.fde for s in scenes.values()) / len(scenes)
        else:
            avg_ade = math.fsum(self.samples["ade"]) / n
            avg_fde = math.fsum(self.samples["fde"]) / n
        return MetricsReport(
            dataset=dataset,
            unit=unit,
            k=k,
            joint_min=joint_min,
            scenes=scenes,
            average_ade=avg_ade,
            average_fde=avg_fde,
            sample_count=n,
            param_count=param_count,
            flop_estimate=flop_estimate,
        )


class MetricsEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return super(MetricsEncoder, self).default(obj)


def save_metrics(metrics: Dict[str, Any], output_path: Path):
    with open(output_path, 'w') as f:
        json.dump(metrics, f, indent=2, cls=MetricsEncoder)
