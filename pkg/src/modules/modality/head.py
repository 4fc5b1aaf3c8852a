import math
import torch
import torch.nn as nn
from typing import Tuple

from src.core.models import ModelConfig


class ModalityHead(nn.Module):
    """
    Explicit-modality decoder. Temporal features are projected into K latents
    by dedicated MLPs, aligned by one shared MLP, modulated by the social
    feature through cross-attention over the K modalities, and decoded into
    K trajectories and K normalized scores.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.k = cfg.modalities
        self.pred_len = cfg.pred_len
        self.heads = cfg.heads
        self.dim = cfg.social_out_dim
        self.head_dim = self.dim // cfg.heads
        self.modulation = cfg.modulation
        flat = cfg.token_count * cfg.temporal_dim

        self.modality_mlps = nn.ModuleList([
            nn.Sequential(nn.Linear(flat, cfg.latent_dim), nn.ReLU(), nn.Linear(cfg.latent_dim, cfg.latent_dim))
            for _ in range(self.k)
        ])
        self.align = nn.Sequential(nn.Linear(cfg.latent_dim, self.dim), nn.PReLU())

        self.w_q = nn.Linear(self.dim, self.dim, bias=False)
        self.w_k = nn.Linear(self.dim, self.dim, bias=False)
        self.w_v = nn.Linear(self.dim, self.dim, bias=False)

        self.norm1 = nn.LayerNorm(self.dim)
        self.ffn = nn.Sequential(nn.Linear(self.dim, 2 * self.dim), nn.ReLU(), nn.Linear(2 * self.dim, self.dim))
        self.norm2 = nn.LayerNorm(self.dim)

        self.regressor = nn.Linear(self.dim, 2 * cfg.pred_len)
        self.scorer = nn.Linear(self.dim, 1)

    def project_modalities(self, z_flat: torch.Tensor) -> torch.Tensor:
        # (B, L*F) -> (B, K, H)
        return torch.stack([mlp(z_flat) for mlp in self.modality_mlps], dim=1)

    def align_modalities(self, f: torch.Tensor) -> torch.Tensor:
        return self.align(f)

    def modulate(self, social: torch.Tensor, f_aligned: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        social (B, S'), f_aligned (B, K, S') -> A (B, K, S') and the
        per-head modality weights (B, heads, K).
        """
        b, k, _ = f_aligned.shape
        q = self.w_q(social).view(b, self.heads, self.head_dim)
        key = self.w_k(f_aligned).view(b, k, self.heads, self.head_dim)
        value = self.w_v(f_aligned).view(b, k, self.heads, self.head_dim)
        if self.modulation == "singleton":
            weights = value.new_ones((b, self.heads, k))
        else:
            logits = torch.einsum("bhd,bkhd->bhk", q, key) / math.sqrt(self.head_dim)
            weights = torch.softmax(logits, dim=-1)
        attended = weights.permute(0, 2, 1).unsqueeze(-1) * value
        return attended.reshape(b, k, self.dim), weights

    def decode_block(self, f_aligned: torch.Tensor, attended: torch.Tensor) -> torch.Tensor:
        x = self.norm1(f_aligned + attended)
        return self.norm2(x + self.ffn(x))

    def regress_trajectories(self, decoded: torch.Tensor) -> torch.Tensor:
        return self.regressor(decoded).view(*decoded.shape[:-1], self.pred_len, 2)

    def score_modalities(self, decoded: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        logits = self.scorer(decoded).squeeze(-1)
        return torch.softmax(logits, dim=-1), logits

    def forward(self, temporal: torch.Tensor, social: torch.Tensor):
        """temporal (B, L, F), social (B, S') -> trajectories (B, K, T, 2), scores (B, K), logits (B, K)."""
        f = self.project_modalities(temporal.flatten(-2))
        f_aligned = self.align_modalities(f)
        attended, _ = self.modulate(social, f_aligned)
        decoded = self.decode_block(f_aligned, attended)
        assert decoded.shape[1] == self.k, decoded.shape
        trajectories = self.regress_trajectories(decoded)
        scores, logits = self.score_modalities(decoded)
        return trajectories, scores, logits
