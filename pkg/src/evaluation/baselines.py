import numpy as np
from typing import List

from src.core.interfaces import TrajectoryPredictor
from src.core.types import ObservationWindow, ModalityPrediction


class BaselinePredictor(TrajectoryPredictor):
    def __init__(self, pred_len: int = 12):
        self.pred_len = pred_len

    def predict(self, windows: List[ObservationWindow]) -> List[ModalityPrediction]:
        return [ModalityPrediction(trajectories=self._extrapolate(w)[None], scores=np.ones(1)) for w in windows]

    def _extrapolate(self, window: ObservationWindow) -> np.ndarray:
        raise NotImplementedError


class StationaryBaseline(BaselinePredictor):
    """Agent stays at its t=0 position."""

    @property
    def name(self) -> str:
        return "stationary"

    def _extrapolate(self, window: ObservationWindow) -> np.ndarray:
        return np.zeros((self.pred_len, 2))


class ConstantVelocityBaseline(BaselinePredictor):
    """Repeats the last observed displacement."""

    @property
    def name(self) -> str:
        return "constant_velocity"

    def _extrapolate(self, window: ObservationWindow) -> np.ndarray:
        steps = np.arange(1, self.pred_len + 1, dtype=np.float64)[:, None]
        return steps * window.velocity[None, :]
