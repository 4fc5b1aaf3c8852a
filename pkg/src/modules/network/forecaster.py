import numpy as np
import torch
import torch.nn as nn
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

from src.core.interfaces import TrajectoryPredictor
from src.core.logger import logging
from src.core.models import ModelConfig
from src.core.types import ObservationWindow, ModalityPrediction, WindowKey
from src.modules.modality.head import ModalityHead
from src.modules.social.graph import SocialEncoder, SocialGraph, build_batch_graph
from src.modules.temporal.encoder import TemporalEncoder

logger = logging.getLogger(__name__)


class ForecastOutput(NamedTuple):
    trajectories: torch.Tensor  # (B, K, T, 2) normalized frame
    scores: torch.Tensor  # (B, K)
    logits: torch.Tensor  # (B, K)


@dataclass
class WindowBatch:
    history: torch.Tensor  # (B, T', 2)
    future: torch.Tensor  # (B, T, 2)
    graph: SocialGraph
    keys: List[WindowKey]

    def to(self, device) -> "WindowBatch":
        return WindowBatch(self.history.to(device), self.future.to(device), self.graph.to(device), self.keys)


def collate(windows: Sequence[ObservationWindow], dtype: torch.dtype = torch.float32) -> WindowBatch:
    return WindowBatch(
        history=torch.as_tensor(np.stack([w.history for w in windows]), dtype=dtype),
        future=torch.as_tensor(np.stack([w.future for w in windows]), dtype=dtype),
        graph=build_batch_graph(windows, dtype=dtype),
        keys=[w.key for w in windows],
    )


class ModalityForecaster(nn.Module):
    """Temporal encoder + social encoder + explicit-modality head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.temporal = TemporalEncoder(cfg)
        self.social = SocialEncoder(cfg)
        self.head = ModalityHead(cfg)

    def forward(self, history: torch.Tensor, graph: SocialGraph) -> ForecastOutput:
        temporal, _ = self.temporal(history)
        social = self.social(graph)
        if social.shape[0] != history.shape[0]:
            raise ValueError(f"Graph has {social.shape[0]} query nodes for a batch of {history.shape[0]}")
        return ForecastOutput(*self.head(temporal, social))


class NetworkPredictor(TrajectoryPredictor):
    """Batched inference wrapper returning numpy predictions per window."""

    def __init__(self, model: ModalityForecaster, batch_size: int = 256, device: Optional[str] = None):
        self.model = model
        self.batch_size = batch_size
        self.device = torch.device(device or "cpu")
        self.dtype = next(model.parameters()).dtype

    @property
    def name(self) -> str:
        return "network"

    @torch.no_grad()
    def predict(self, windows: List[ObservationWindow]) -> List[ModalityPrediction]:
        was_training = self.model.training
        self.model.eval()
        self.model.to(self.device)
        out: List[ModalityPrediction] = []
        try:
            for start in range(0, len(windows), self.batch_size):
                batch = collate(windows[start:start + self.batch_size], dtype=self.dtype).to(self.device)
                result = self.model(batch.history, batch.graph)
                traj = result.trajectories.double().cpu().numpy()
                scores = result.scores.double().cpu().numpy()
                out.extend(ModalityPrediction(trajectories=t, scores=s) for t, s in zip(traj, scores))
        finally:
            self.model.train(was_training)
        return out
