from abc import ABC, abstractmethod
from typing import List
from src.core.types import ObservationWindow, ModalityPrediction


class TrajectoryPredictor(ABC):
    @abstractmethod
    def predict(self, windows: List[ObservationWindow]) -> List[ModalityPrediction]:
        """
        Returns one prediction per window, trajectories in the window's
        normalized frame (offsets from its t=0 position).
        """
        pass

    @property
    @abstractmethod
    def name(self) -> str:
        pass
