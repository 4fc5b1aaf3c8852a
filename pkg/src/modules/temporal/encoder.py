import math
import torch
import torch.nn as nn
from typing import Tuple

from src.core.errors import ConfigurationError
from src.core.models import ModelConfig


class GatedFusion(nn.Module):
    """
    Blends two equally shaped feature tensors with a sigmoid gate computed
    from their concatenation: out = w * a + (1 - w) * b.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.gate_proj = nn.Linear(2 * dim, dim)

    def gate(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        if a.shape != b.shape:
            raise ValueError(f"Gated fusion needs equal shapes, got {tuple(a.shape)} and {tuple(b.shape)}")
        return torch.sigmoid(self.gate_proj(torch.cat([a, b], dim=-1)))

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        w = self.gate(a, b)
        return w * a + (1.0 - w) * b


class PatchEmbedding(nn.Module):
    """Channel-independent sliding-window MLPs, stride 1."""

    def __init__(self, patch_len: int, dim: int):
        super().__init__()
        self.patch_len = patch_len
        self.mlp_x = nn.Sequential(nn.Linear(patch_len, dim), nn.ReLU(), nn.Linear(dim, dim))
        self.mlp_y = nn.Sequential(nn.Linear(patch_len, dim), nn.ReLU(), nn.Linear(dim, dim))

    def forward(self, history: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        # history: (B, T', 2) -> patches (B, T'-P+1, P) per channel
        if history.shape[-2] < self.patch_len:
            raise ConfigurationError(f"History length {history.shape[-2]} is shorter than patch length {self.patch_len}")
        patches = history.unfold(-2, self.patch_len, 1)  # (B, L, 2, P)
        return self.mlp_x(patches[..., 0, :]), self.mlp_y(patches[..., 1, :])


class SinusoidalPositionalEncoding(nn.Module):
    def __init__(self, dim: int, max_len: int = 64):
        super().__init__()
        position = torch.arange(max_len, dtype=torch.float64).unsqueeze(1)
        div_term = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
        pe = torch.zeros(max_len, dim, dtype=torch.float64)
        pe[:, 0::2] = torch.sin(position * div_term)
        pe[:, 1::2] = torch.cos(position * div_term)[:, : dim // 2]
        self.register_buffer("pe", pe.to(torch.get_default_dtype()))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return z + self.pe[: z.shape[-2]].to(z.dtype)


class TemporalEncoder(nn.Module):
    """
    (B, T', 2) normalized history -> per-token GRU outputs (B, L, F) and the
    final hidden state (B, F), L = T' - P + 1.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        dim = cfg.temporal_dim
        if dim % cfg.heads != 0:
            raise ConfigurationError(f"temporal_dim={dim} is not divisible by heads={cfg.heads}")
        if cfg.patch_len > cfg.obs_len:
            raise ConfigurationError(f"patch_len {cfg.patch_len} exceeds obs_len {cfg.obs_len}")
        self.obs_len = cfg.obs_len
        self.tokens = cfg.token_count
        self.dim = dim
        self.no_patch = cfg.no_patch

        if self.no_patch:
            # Ablation: one perceptron over the flattened history stands in for the whole module
            self.flat_mlp = nn.Sequential(
                nn.Linear(cfg.obs_len * 2, dim), nn.ReLU(), nn.Linear(dim, self.tokens * dim))
            return

        self.patch = PatchEmbedding(cfg.patch_len, dim)
        self.fusion = GatedFusion(dim)
        self.positional = SinusoidalPositionalEncoding(dim)
        layer = nn.TransformerEncoderLayer(
            d_model=dim,
            nhead=cfg.heads,
            dim_feedforward=2 * dim,
            dropout=cfg.dropout,
            batch_first=True,
        )
        self.transformer = nn.TransformerEncoder(layer, num_layers=cfg.temporal_layers, enable_nested_tensor=False)
        self.gru = nn.GRU(dim, dim, num_layers=1, batch_first=True)

    def patch_embed(self, history: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.patch(history)

    def embed(self, history: torch.Tensor) -> torch.Tensor:
        if self.no_patch:
            return self.flat_mlp(history.flatten(-2)).view(*history.shape[:-2], self.tokens, self.dim)
        z_x, z_y = self.patch(history)
        return self.fusion(z_x, z_y)

    def transformer_encode(self, z: torch.Tensor) -> torch.Tensor:
        return self.transformer(self.positional(z))

    def gru_refine(self, z: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        h0 = z.new_zeros(1, z.shape[0], self.dim)
        out, h_n = self.gru(z, h0)
        return out, h_n[-1]

    def forward(self, history: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        z = self.embed(history)
        if self.no_patch:
            # no transformer or GRU; the last token doubles as the summary state
            return z, z[..., -1, :]
        assert z.shape[-2:] == (self.tokens, self.dim), z.shape
        z = self.transformer_encode(z)
        out, c = self.gru_refine(z)
        assert out.shape[-2:] == (self.tokens, self.dim), out.shape
        return out, c
