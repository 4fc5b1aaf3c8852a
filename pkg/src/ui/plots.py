import numpy as np
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Drawing, PolyLine, Circle, String
from reportlab.lib import colors

from src.core.errors import DataError
from src.core.logger import logging
from src.core.models import PredictionRecord
from src.core.types import ObservationWindow
from src.evaluation.predictions import read_predictions, record_key

logger = logging.getLogger(__name__)

HISTORY_COLOR = colors.HexColor("#1f77b4")
TRUTH_COLOR = colors.HexColor("#2ca02c")
PREDICTION_COLOR = colors.HexColor("#e6b800")


@dataclass
class CanvasTransform:
    """Uniform-scale affine map from world coordinates to drawing coordinates."""
    scale: float
    offset_x: float
    offset_y: float
    width: float
    height: float

    def to_canvas(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.stack([points[..., 0] * self.scale + self.offset_x,
                         points[..., 1] * self.scale + self.offset_y], axis=-1)


def fit_transform(point_sets: Sequence[np.ndarray], width: float = 480, height: float = 480,
                  margin: float = 24) -> CanvasTransform:
    pts = np.concatenate([np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in point_sets])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-6)
    scale = float(min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1]))
    center = (lo + hi) / 2.0
    return CanvasTransform(
        scale=scale,
        offset_x=width / 2.0 - center[0] * scale,
        offset_y=height / 2.0 - center[1] * scale,
        width=width,
        height=height,
    )


def _polyline(points: np.ndarray, color, width: float, opacity: float = 1.0) -> PolyLine:
    return PolyLine(points.reshape(-1).tolist(), strokeColor=color, strokeWidth=width, strokeOpacity=opacity)


def render_window(window: ObservationWindow, record: PredictionRecord, path: Path,
                  width: float = 480, height: float = 480) -> CanvasTransform:
    """
    Observed history, ground truth and the K predictions of one window, all in
    world coordinates, one point per 0.4 s step. Prediction opacity follows
    the modality score. Returns the world -> drawing transform used.
    """
    history = window.history + window.origin
    truth = np.concatenate([history[-1:], window.future + window.origin])
    predictions = np.asarray(record.trajectories, dtype=np.float64)
    scores = np.asarray(record.scores, dtype=np.float64)
    transform = fit_transform([history, truth, predictions], width, height)

    drawing = Drawing(width, height)
    drawing.add(_polyline(transform.to_canvas(history), HISTORY_COLOR, 2.0))
    drawing.add(_polyline(transform.to_canvas(truth), TRUTH_COLOR, 2.0))
    top = scores.max() if scores.size and scores.max() > 0 else 1.0
    for traj, score in zip(predictions, scores):
        drawing.add(_polyline(transform.to_canvas(traj), PREDICTION_COLOR, 1.2, 0.15 + 0.85 * score / top))
    for x, y in transform.to_canvas(history):
        drawing.add(Circle(x, y, 2.0, fillColor=HISTORY_COLOR, strokeColor=None))
    for x, y in transform.to_canvas(truth[1:]):
        drawing.add(Circle(x, y, 2.0, fillColor=TRUTH_COLOR, strokeColor=None))
    drawing.add(String(8, height - 14, f"{window.scene} agent {window.agent_id} @ {window.anchor_frame}", fontSize=9))

    renderSVG.drawToFile(drawing, str(path))
    return transform


def plot_predictions(prediction_path: Path, windows: List[ObservationWindow], output_dir: Path,
                     agent_ids: Optional[Sequence[int]] = None, limit: Optional[int] = None) -> List[Path]:
    """One SVG per prediction record (optionally filtered by agent id)."""
    _, records = read_predictions(prediction_path)
    if not records:
        logger.warning(f"No predictions in {prediction_path}, nothing to plot")
        return []
    by_key = {w.key: w for w in windows}
    if agent_ids:
        available = sorted({r.agent_id for r in records})
        missing = sorted(set(agent_ids) - set(available))
        if missing:
            raise DataError(f"Agent ids {missing} not in predictions. Available: {available}")
        records = [r for r in records if r.agent_id in set(agent_ids)]
    if limit is not None:
        records = records[:limit]

    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for record in records:
        window = by_key.get(record_key(record))
        if window is None:
            raise DataError(f"No window for prediction {record_key(record)}")
        path = output_dir / f"{record.scene.replace('/', '_')}_{record.agent_id}_{record.anchor_frame}.svg"
        render_window(window, record, path)
        written.append(path)
    logger.info(f"Wrote {len(written)} plots to {output_dir}")
    return written
