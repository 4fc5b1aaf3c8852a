from dataclasses import dataclass, field
from typing import Optional, Literal, List, Tuple
import numpy as np

Unit = Literal["meters", "pixels"]
WindowKey = Tuple[str, int, int]  # (scene, agent_id, anchor_frame)


@dataclass
class RawTrack:
    """One agent's positions on its recording's frame grid, frames strictly increasing."""
    agent_id: int
    frames: np.ndarray  # (n,) int
    positions: np.ndarray  # (n, 2) float
    unit: Unit = "meters"
    label: Optional[str] = None

    def __len__(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class Scene:
    """All tracks of one recording restricted to the obs+pred grid around `anchor_frame`."""
    dataset_name: str
    anchor_frame: int
    frame_step: int
    frame_grid: np.ndarray  # (T'+T,) int
    agent_tracks: List[RawTrack]


@dataclass
class ObservationWindow:
    scene: str
    agent_id: int
    anchor_frame: int
    origin: np.ndarray  # (2,) world position at t=0
    history: np.ndarray  # (T', 2), history[-1] == (0, 0)
    future: np.ndarray  # (T, 2)
    velocity: np.ndarray  # (2,) pseudo-velocity, history[-1] - history[-2]
    neighbor_ids: List[int] = field(default_factory=list)
    neighbor_histories: np.ndarray = field(default_factory=lambda: np.zeros((0, 8, 2)))  # each in its own t=0 frame
    neighbor_offsets: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))  # p_j(0) - p_i(0)

    @property
    def key(self) -> WindowKey:
        return (self.scene, int(self.agent_id), int(self.anchor_frame))

    @property
    def num_neighbors(self) -> int:
        return len(self.neighbor_ids)


@dataclass
class ModalityPrediction:
    trajectories: np.ndarray  # (K, T, 2)
    scores: np.ndarray  # (K,), sums to 1

    @property
    def k(self) -> int:
        return int(self.trajectories.shape[0])
