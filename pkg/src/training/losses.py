import torch
from typing import NamedTuple

BCE_EPS = 1e-7


class LossBreakdown(NamedTuple):
    total: torch.Tensor
    traj: torch.Tensor
    cls: torch.Tensor
    winners: torch.Tensor  # (B,) long


def _batched(pred: torch.Tensor, gt: torch.Tensor):
    if pred.dim() == 3:
        return pred.unsqueeze(0), gt.unsqueeze(0)
    return pred, gt


def modality_errors(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """(B, K, T, 2), (B, T, 2) -> (B, K) summed squared per-step Euclidean error."""
    return ((pred - gt.unsqueeze(-3)) ** 2).sum(dim=-1).sum(dim=-1)


def winner_index(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Closest modality per sample; ties resolve to the lowest k."""
    pred, gt = _batched(pred, gt)
    with torch.no_grad():
        return torch.argmin(modality_errors(pred, gt), dim=-1)


def traj_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """
    (1/T) min_k sum_t |p_hat - p|^2, averaged over the batch.
    Accepts (K, T, 2) / (T, 2) or a leading batch dimension.
    """
    pred, gt = _batched(pred, gt)
    if not (torch.isfinite(pred).all() and torch.isfinite(gt).all()):
        raise ValueError("traj_loss received non-finite values")
    errors = modality_errors(pred, gt)
    winners = torch.argmin(errors.detach(), dim=-1)
    best = errors.gather(-1, winners.unsqueeze(-1)).squeeze(-1)
    return (best / gt.shape[-2]).mean()


def cls_loss(scores: torch.Tensor, gt: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy against a one-hot on the closest modality, mean over k then batch."""
    if scores.dim() == 1:
        scores = scores.unsqueeze(0)
    winners = winner_index(pred, gt)
    target = torch.zeros_like(scores).scatter_(-1, winners.unsqueeze(-1), 1.0)
    p = scores.clamp(BCE_EPS, 1.0 - BCE_EPS)
    bce = -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p))
    return bce.mean(dim=-1).mean()


def total_loss(pred: torch.Tensor, scores: torch.Tensor, gt: torch.Tensor) -> LossBreakdown:
    traj = traj_loss(pred, gt)
    cls = cls_loss(scores, gt, pred)
    return LossBreakdown(total=traj + cls, traj=traj, cls=cls, winners=winner_index(pred, gt))
