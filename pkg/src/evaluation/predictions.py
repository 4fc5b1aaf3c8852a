"""
Prediction interchange, JSON lines, version 1.

Line 1 (header):
    {"schema": "trajectory-predictions", "version": 1, "k": K, "pred_len": T, "unit": "meters"|"pixels"}
Every following line (one per window):
    scene         window scene label ("<scene>" or "<scene>/<recording>")
    agent_id      primary agent id within its recording
    anchor_frame  frame index of t=0
    origin        [x, y] world position at t=0
    trajectories  K x T x [x, y] in world coordinates
    scores        K normalized modality scores
"""
import json
import numpy as np
from pathlib import Path
from typing import Dict, List, Tuple

from src.core.errors import DataError, ParseError
from src.core.logger import logging
from src.core.models import PredictionHeader, PredictionRecord, MetricsReport
from src.core.types import ObservationWindow, ModalityPrediction, WindowKey
from src.evaluation.metrics import MetricsEngine

logger = logging.getLogger(__name__)

PREDICTIONS_VERSION = 1


def to_records(windows: List[ObservationWindow], predictions: List[ModalityPrediction]) -> List[PredictionRecord]:
    return [
        PredictionRecord(
            scene=w.scene,
            agent_id=w.agent_id,
            anchor_frame=w.anchor_frame,
            origin=w.origin.tolist(),
            trajectories=(p.trajectories + w.origin).tolist(),
            scores=p.scores.tolist(),
        )
        for w, p in zip(windows, predictions)
    ]


def write_predictions(path: Path, windows: List[ObservationWindow], predictions: List[ModalityPrediction],
                      unit: str = "meters") -> Path:
    path = Path(path)
    k = predictions[0].k if predictions else 0
    pred_len = int(predictions[0].trajectories.shape[1]) if predictions else 0
    header = PredictionHeader(k=k, pred_len=pred_len, unit=unit)
    with open(path, "w", encoding="utf-8") as f:
        f.write(header.model_dump_json(by_alias=True) + "\n")
        for record in to_records(windows, predictions):
            f.write(record.model_dump_json() + "\n")
    logger.info(f"Wrote {len(predictions)} predictions to {path}")
    return path


def read_predictions(path: Path) -> Tuple[PredictionHeader, List[PredictionRecord]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Prediction file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
        if not first.strip():
            return None, []
        header = PredictionHeader.model_validate(json.loads(first))
        if header.version != PREDICTIONS_VERSION:
            raise ParseError(f"Unsupported prediction file version {header.version} in {path}", 1)
        records = []
        for line_number, line in enumerate(f, start=2):
            if not line.strip():
                continue
            record = PredictionRecord.model_validate_json(line)
            lengths = {len(trajectory) for trajectory in record.trajectories}
            if len(record.trajectories) != header.k or len(record.scores) != header.k or lengths - {header.pred_len}:
                raise ParseError(
                    f"record with {len(record.trajectories)} trajectories of lengths {sorted(lengths)} and "
                    f"{len(record.scores)} scores does not match "
                    f"header k={header.k} pred_len={header.pred_len}", line_number)
            records.append(record)
    return header, records


def record_key(record: PredictionRecord) -> WindowKey:
    return (record.scene, int(record.agent_id), int(record.anchor_frame))


def evaluate_predictions(records: List[PredictionRecord], windows: List[ObservationWindow], dataset: str,
                         unit: str = "meters", joint_min: bool = False, average: str = "scene_mean") -> MetricsReport:
    """Scores interchange records against the windows they were made for, matched by window key."""
    by_key: Dict[WindowKey, PredictionRecord] = {record_key(r): r for r in records}
    matched_windows, predictions = [], []
    for w in windows:
        record = by_key.get(w.key)
        if record is None:
            continue
        origin = np.asarray(record.origin, dtype=np.float64)
        predictions.append(ModalityPrediction(
            trajectories=np.asarray(record.trajectories, dtype=np.float64) - origin,
            scores=np.asarray(record.scores, dtype=np.float64),
        ))
        matched_windows.append(w)
    unmatched = len(records) - len(matched_windows)
    if unmatched:
        raise DataError(f"{unmatched} prediction records have no matching window")
    if not matched_windows:
        raise DataError("No prediction records to evaluate")
    k = predictions[0].k
    engine = MetricsEngine.from_predictions(matched_windows, predictions, joint_min)
    return engine.report(dataset=dataset, unit=unit, k=k, joint_min=joint_min, average=average)
