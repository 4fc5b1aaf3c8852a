import numpy as np
import torch
import torch.nn as nn
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from src.core.errors import DataError
from src.core.models import ModelConfig
from src.core.types import ObservationWindow, Scene
from src.modules.temporal.encoder import GatedFusion

GEOMETRY_EPS = 1e-6


def edge_geometry(p_i: torch.Tensor, p_j: torch.Tensor, v_i: torch.Tensor) -> torch.Tensor:
    """
    (..., 2) -> (..., 2) holding (|d_ij|, cos theta_ij) with d_ij = p_i - p_j.
    The cosine is 0 when either norm falls below GEOMETRY_EPS.
    """
    d = p_i - p_j
    d_norm = torch.linalg.vector_norm(d, dim=-1)
    v_norm = torch.linalg.vector_norm(v_i, dim=-1)
    degenerate = (d_norm < GEOMETRY_EPS) | (v_norm < GEOMETRY_EPS)
    denom = torch.where(degenerate, torch.ones_like(d_norm), d_norm * v_norm)
    cos = torch.where(degenerate, torch.zeros_like(d_norm), (d * v_i).sum(-1) / denom)
    return torch.stack([d_norm, cos], dim=-1)


def edge_features(p_i: torch.Tensor, p_j: torch.Tensor, v_i: torch.Tensor, raw_vector: bool = False) -> torch.Tensor:
    """Edge MLP input: (|d|, cos) or, for the raw-vector ablation, (dx, dy, cos)."""
    geom = edge_geometry(p_i, p_j, v_i)
    if raw_vector:
        return torch.cat([p_i - p_j, geom[..., 1:]], dim=-1)
    return geom


@dataclass
class SocialGraph:
    """
    Directed interaction graph. Edge k runs edge_index[0, k] (source j) ->
    edge_index[1, k] (destination i). Histories are per-node translated to
    their own t=0 position; positions share one frame.
    """
    node_histories: torch.Tensor  # (N, T', 2)
    node_positions: torch.Tensor  # (N, 2)
    node_velocities: torch.Tensor  # (N, 2)
    edge_index: torch.Tensor  # (2, E) long
    query_index: torch.Tensor  # (Q,) long, nodes whose social feature is returned
    node_ids: List[int] = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return int(self.node_positions.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edge_index.shape[1])

    def in_neighbors(self, node: int) -> List[int]:
        src, dst = self.edge_index
        return src[dst == node].tolist()

    def to(self, device) -> "SocialGraph":
        return SocialGraph(
            node_histories=self.node_histories.to(device),
            node_positions=self.node_positions.to(device),
            node_velocities=self.node_velocities.to(device),
            edge_index=self.edge_index.to(device),
            query_index=self.query_index.to(device),
            node_ids=list(self.node_ids),
        )


def build_batch_graph(windows: Sequence[ObservationWindow], dtype: torch.dtype = torch.float32) -> SocialGraph:
    """
    Disjoint union of star graphs, one per window: every neighbor points at
    its primary. Each star lives in its primary's normalized frame.
    """
    histories, positions, velocities, ids = [], [], [], []
    src, dst, query = [], [], []
    offset = 0
    for w in windows:
        n = w.num_neighbors
        query.append(offset)
        histories.append(w.history[None])
        positions.append(np.zeros((1, 2)))
        velocities.append(w.velocity[None])
        ids.append(w.agent_id)
        if n:
            nh = w.neighbor_histories
            histories.append(nh)
            positions.append(w.neighbor_offsets)
            velocities.append(nh[:, -1] - nh[:, -2])
            ids.extend(w.neighbor_ids)
            src.extend(range(offset + 1, offset + 1 + n))
            dst.extend([offset] * n)
        offset += 1 + n
    return SocialGraph(
        node_histories=torch.as_tensor(np.concatenate(histories), dtype=dtype),
        node_positions=torch.as_tensor(np.concatenate(positions), dtype=dtype),
        node_velocities=torch.as_tensor(np.concatenate(velocities), dtype=dtype),
        edge_index=torch.tensor([src, dst], dtype=torch.long).reshape(2, -1),
        query_index=torch.tensor(query, dtype=torch.long),
        node_ids=ids,
    )


def build_scene_graph(scene: Scene, max_dist: float, obs_len: int = 8, dtype: torch.dtype = torch.float64) -> SocialGraph:
    """
    Graph over every agent observed on all obs_len history frames of the
    scene grid, with an edge j -> i for each ordered pair within max_dist at t=0.
    """
    obs_grid = scene.frame_grid[:obs_len]
    histories, ids = [], []
    for track in scene.agent_tracks:
        mask = np.isin(track.frames, obs_grid)
        if mask.sum() == obs_len:
            histories.append(track.positions[mask])
            ids.append(track.agent_id)
    if not ids:
        raise DataError(f"Scene at anchor {scene.anchor_frame} has no agent with a full observation span")
    raw = np.stack(histories)  # (N, T', 2) world frame
    positions = raw[:, -1]
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    within = (dist <= max_dist) & ~np.eye(len(ids), dtype=bool)
    dst, src = np.nonzero(within)  # row-major: grouped by destination
    return SocialGraph(
        node_histories=torch.as_tensor(raw - positions[:, None, :], dtype=dtype),
        node_positions=torch.as_tensor(positions, dtype=dtype),
        node_velocities=torch.as_tensor(raw[:, -1] - raw[:, -2], dtype=dtype),
        edge_index=torch.as_tensor(np.stack([src, dst]), dtype=torch.long).reshape(2, -1),
        query_index=torch.arange(len(ids), dtype=torch.long),
        node_ids=ids,
    )


class EdgeEmbedding(nn.Module):
    def __init__(self, in_dim: int, dim: int):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(in_dim, dim), nn.ReLU(), nn.Linear(dim, dim))

    def forward(self, g: torch.Tensor) -> torch.Tensor:
        return self.mlp(g)


class NodeEmbedding(nn.Module):
    """Inverted encoding: each channel's whole series is one token, projected T' -> S, then gated."""

    def __init__(self, obs_len: int, dim: int):
        super().__init__()
        self.proj_x = nn.Linear(obs_len, dim)
        self.proj_y = nn.Linear(obs_len, dim)
        self.fusion = GatedFusion(dim)

    def forward(self, histories: torch.Tensor) -> torch.Tensor:
        return self.fusion(self.proj_x(histories[..., 0]), self.proj_y(histories[..., 1]))


def segment_sum(values: torch.Tensor, index: torch.Tensor, num_nodes: int) -> torch.Tensor:
    """
    Per-destination sum of the rows of `values` with a fixed reduction order on
    every device: edges are stably sorted by destination, laid out in a
    (num_nodes, max_degree, ...) zero-padded block and reduced along the degree axis.
    """
    order = torch.argsort(index, stable=True)
    sorted_index = index[order]
    counts = torch.bincount(index, minlength=num_nodes)
    starts = torch.cumsum(counts, 0) - counts
    slot = torch.arange(index.numel(), device=index.device) - starts[sorted_index]
    width = int(counts.max()) if index.numel() else 0
    padded = values.new_zeros((num_nodes, width, *values.shape[1:]))
    padded[sorted_index, slot] = values[order]
    return padded.sum(dim=1)


def scatter_softmax(logits: torch.Tensor, index: torch.Tensor, num_nodes: int) -> torch.Tensor:
    """Softmax of (E, H) logits over the edges sharing a destination index."""
    idx = index.unsqueeze(-1).expand_as(logits)
    node_max = logits.new_full((num_nodes, logits.shape[-1]), float("-inf"))
    node_max = node_max.scatter_reduce(0, idx, logits.detach(), reduce="amax", include_self=True)
    ex = torch.exp(logits - node_max[index])
    denom = segment_sum(ex, index, num_nodes)
    return ex / denom[index]


class GraphAttentionAggregator(nn.Module):
    """
    Multi-head attention message passing with edge features. Per head:
    u_ij = LeakyReLU(w . [h_i | h_j | e_ij] + b), alpha = softmax over j,
    messages alpha_ij (W h_j + b) summed; heads concatenated, then PReLU.
    Nodes without in-edges get a learned vector.
    """

    def __init__(self, dim: int, out_dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = out_dim // heads
        self.out_dim = out_dim
        self.attn = nn.Linear(3 * dim, heads)
        self.leaky = nn.LeakyReLU(0.2)
        self.message = nn.Linear(dim, out_dim)
        self.act = nn.PReLU()
        self.isolated = nn.Parameter(torch.randn(out_dim) * 0.02)

    def attention(self, h: torch.Tensor, e: torch.Tensor, edge_index: torch.Tensor) -> torch.Tensor:
        src, dst = edge_index
        logits = self.leaky(self.attn(torch.cat([h[dst], h[src], e], dim=-1)))
        return scatter_softmax(logits, dst, h.shape[0])

    def forward(self, h: torch.Tensor, e: torch.Tensor, edge_index: torch.Tensor,
                query_index: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
        n = h.shape[0]
        src, dst = edge_index
        alpha = self.attention(h, e, edge_index)  # (E, heads)
        msg = self.message(h[src]).view(-1, self.heads, self.head_dim) * alpha.unsqueeze(-1)
        agg = segment_sum(msg, dst, n)
        out = self.act(agg.reshape(n, self.out_dim))
        has_edges = torch.bincount(dst, minlength=n) > 0
        out = torch.where(has_edges.unsqueeze(-1), out, self.isolated.expand(n, -1))
        if query_index is not None:
            out = out[query_index]
        return out, alpha


class SocialEncoder(nn.Module):
    """SocialGraph -> (Q, S') social features of the query nodes."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.no_social = cfg.no_social
        self.raw_vector = cfg.edge_raw_vector
        self.edge = EdgeEmbedding(3 if cfg.edge_raw_vector else 2, cfg.social_dim)
        self.node = NodeEmbedding(cfg.obs_len, cfg.social_dim)
        self.gnn = GraphAttentionAggregator(cfg.social_dim, cfg.social_out_dim, cfg.heads)

    def forward(self, graph: SocialGraph) -> torch.Tensor:
        if self.no_social:
            return self.gnn.isolated.expand(graph.query_index.shape[0], -1)
        h = self.node(graph.node_histories)
        src, dst = graph.edge_index
        g = edge_features(graph.node_positions[dst], graph.node_positions[src],
                          graph.node_velocities[dst], self.raw_vector)
        e = self.edge(g)
        out, _ = self.gnn(h, e, graph.edge_index, graph.query_index)
        return out
