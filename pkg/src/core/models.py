import hashlib
import json
from pydantic import BaseModel, Field, model_validator
from typing import List, Optional, Literal, Dict, Tuple

DatasetName = Literal["ethucy", "sdd", "synthetic"]


class ModelConfig(BaseModel):
    obs_len: int = Field(8, gt=0)  # T'
    pred_len: int = Field(12, gt=0)  # T
    temporal_dim: int = Field(64, gt=0)  # F
    patch_len: int = Field(3, gt=0)  # P
    temporal_layers: int = Field(3, gt=0)
    heads: int = Field(4, gt=0)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    social_dim: int = Field(256, gt=0)  # S
    social_out_dim: int = Field(256, gt=0)  # S'
    latent_dim: int = Field(1024, gt=0)  # H
    modalities: int = Field(20, gt=0)  # K
    no_patch: bool = False
    no_social: bool = False
    edge_raw_vector: bool = False
    modulation: Literal["softmax", "singleton"] = "softmax"

    @model_validator(mode="after")
    def _check_dims(self):
        if self.patch_len > self.obs_len:
            raise ValueError(f"patch_len {self.patch_len} exceeds obs_len {self.obs_len}")
        for name in ("temporal_dim", "social_out_dim"):
            if getattr(self, name) % self.heads != 0:
                raise ValueError(f"{name}={getattr(self, name)} is not divisible by heads={self.heads}")
        return self

    @property
    def token_count(self) -> int:
        return self.obs_len - self.patch_len + 1


class TrainConfig(BaseModel):
    dataset: DatasetName = "ethucy"
    batch_size: int = Field(32, gt=0)
    epochs: int = Field(300, gt=0)
    lr: float = Field(5e-4, gt=0)
    lr_min: float = Field(0.0, ge=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = Field(0.0, ge=0)
    grad_clip: float = Field(10.0, ge=0)  # 0 disables clipping
    augment_rotation: bool = True
    seed: int = 0
    max_distance: float = Field(10.0, gt=0)
    max_steps: Optional[int] = Field(None, gt=0)
    validation_fraction: float = Field(0.1, ge=0, lt=1)

    @property
    def schedule(self) -> Dict[str, float]:
        # the floor is reached at epoch `epochs - 1`; a single-epoch run never leaves lr0
        return {"kind": "cosine", "lr0": self.lr, "lr_min": self.lr_min, "t_max": max(1, self.epochs - 1)}


class DataConfig(BaseModel):
    obs_len: int = Field(8, gt=0)
    pred_len: int = Field(12, gt=0)
    anchor_stride: int = Field(1, gt=0)
    max_distance: float = Field(10.0, gt=0)
    frame_stride: int = Field(12, gt=0)  # SDD downsampling
    root: Optional[str] = None  # data.<dataset>.root
    scenes: List[str] = Field(default_factory=lambda: ["eth", "hotel", "univ", "zara1", "zara2"])
    test_videos: List[str] = Field(default_factory=list)  # SDD held-out videos
    synthetic_windows: int = Field(2000, gt=0)
    cache_dir: Optional[str] = None  # None: <output root>/cache

    def window_params(self) -> Dict[str, object]:
        """The fields that change the cut windows; the window cache is keyed on these."""
        return self.model_dump(exclude={"scenes", "test_videos", "cache_dir", "synthetic_windows"})


class RunConfig(BaseModel):
    command: str
    dataset: DatasetName = "ethucy"
    data_root: Optional[str] = None
    holdout: Optional[str] = None
    output_dir: str = "runs"
    seed: int = 0
    joint_min: bool = False
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    data_hash: Optional[str] = None
    reference_params_m: float = 0.043  # evaluation.reference.params_m
    reference_flops_m: float = 1.828
    overrides: Dict[str, object] = Field(default_factory=dict)

    def config_hash(self) -> str:
        return stable_hash(self.model_dump(exclude={"command", "output_dir", "data_hash"}))


class WindowRecord(BaseModel):
    """Serialized ObservationWindow (window cache line)."""
    scene: str
    agent_id: int
    anchor_frame: int
    origin: List[float]
    history: List[List[float]]
    future: List[List[float]]
    velocity: List[float]
    neighbor_ids: List[int] = []
    neighbor_histories: List[List[List[float]]] = []
    neighbor_offsets: List[List[float]] = []


class PredictionRecord(BaseModel):
    """One line of the prediction interchange (world coordinates)."""
    scene: str
    agent_id: int
    anchor_frame: int
    origin: List[float]
    trajectories: List[List[List[float]]]  # K x T x 2
    scores: List[float]


class PredictionHeader(BaseModel):
    schema_name: Literal["trajectory-predictions"] = Field("trajectory-predictions", alias="schema")
    version: int = 1
    k: int
    pred_len: int
    unit: str = "meters"

    model_config = {"populate_by_name": True}


class SceneMetrics(BaseModel):
    ade: float = Field(ge=0.0)
    fde: float = Field(ge=0.0)
    samples: int = Field(ge=0)


class MetricsReport(BaseModel):
    dataset: str
    unit: str
    k: int
    joint_min: bool = False
    scenes: Dict[str, SceneMetrics]
    average_ade: float = Field(ge=0.0)
    average_fde: float = Field(ge=0.0)
    sample_count: int
    param_count: Optional[int] = None
    flop_estimate: Optional[int] = None


class ComplexityReport(BaseModel):
    param_count: int
    flop_estimate: int
    latency_ms: Optional[float] = None
    reference_params_m: float
    reference_flops_m: float
    note: str


def stable_hash(payload: Dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
