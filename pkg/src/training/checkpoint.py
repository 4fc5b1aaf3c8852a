import torch
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.core.errors import CheckpointError
from src.core.logger import logging
from src.core.models import RunConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "modality-forecaster-checkpoint"
CHECKPOINT_VERSION = 1

# Layout (torch.save of a plain dict):
#   format, version          container identity, checked on load
#   config_hash, config      RunConfig dump and its SHA-256
#   model_state              nn.Module.state_dict()
#   optimizer_state          Adam state_dict
#   scheduler_state          CosineAnnealingLR state_dict
#   epoch                    epoch in progress when batch_offset > 0, else the
#                            last completed epoch (0-based, -1 before the first)
#   batch_offset             batches already taken in an interrupted epoch
#   partial_losses           [traj, cls] loss sums over those batches
#   global_step              optimizer steps taken so far
#   torch_rng_state          torch.get_rng_state() at save time
#   best_val_ade             best validation ADE seen so far (inf if none)


def save_checkpoint(path: Path,
                    run_config: RunConfig,
                    model: torch.nn.Module,
                    optimizer: Optional[torch.optim.Optimizer],
                    scheduler: Optional[Any],
                    epoch: int,
                    global_step: int,
                    best_val_ade: float,
                    batch_offset: int = 0,
                    partial_losses: Tuple[float, float] = (0.0, 0.0)) -> Path:
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config_hash": run_config.config_hash(),
        "config": run_config.model_dump(mode="json"),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "scheduler_state": scheduler.state_dict() if scheduler is not None else None,
        "epoch": epoch,
        "batch_offset": batch_offset,
        "partial_losses": list(partial_losses),
        "global_step": global_step,
        "torch_rng_state": torch.get_rng_state(),
        "best_val_ade": best_val_ade,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    logger.info(f"Checkpoint saved: {path} (epoch {epoch})")
    return path


def load_checkpoint(path: Path, map_location: str = "cpu") -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location=map_location, weights_only=False)
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a forecaster checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {payload.get('version')} in {path}")
    run_config = RunConfig.model_validate(payload["config"])
    if run_config.config_hash() != payload.get("config_hash"):
        raise CheckpointError(f"Config hash mismatch in {path}")
    payload["run_config"] = run_config
    return payload


def restore_model(payload: Dict[str, Any]):
    from src.modules.network.forecaster import ModalityForecaster
    model = ModalityForecaster(payload["run_config"].model)
    model.load_state_dict(payload["model_state"])
    return model
