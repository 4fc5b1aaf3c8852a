import math
import random
import numpy as np
import pandas as pd
import torch
from pathlib import Path
from typing import List, Optional, Dict, Any, Tuple
from pydantic import ValidationError

from src.core.audit import AuditLogger
from src.core.errors import ConfigurationError, DataError, TrainingDivergedError
from src.core.logger import logging, log_event
from src.core.models import RunConfig, TrainConfig
from src.core.types import ObservationWindow
from src.evaluation.metrics import batch_ade_fde
from src.modules.data.windows import augment_rotation
from src.modules.network.forecaster import ModalityForecaster, NetworkPredictor, collate
from src.training.checkpoint import save_checkpoint, load_checkpoint
from src.training.losses import total_loss

logger = logging.getLogger("training")

METRICS_COLUMNS = ["epoch", "lr", "train_loss_traj", "train_loss_cls", "val_ade", "val_fde"]


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def epoch_plan(seed: int, epoch: int, n: int, augment: bool):
    """Data order and rotation angles for one epoch; a function of (seed, epoch) only."""
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(n)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n) if augment else np.zeros(n)
    return order, angles


class Trainer:
    """
    Adam + per-epoch cosine annealing to `lr_min` at the final epoch.
    Writes metrics.csv, best.pt, final.pt and audit.jsonl into output_dir.
    A run stopped by `max_steps` inside an epoch saves the batch offset, so a
    resumed run finishes that epoch's plan and reproduces the uninterrupted curve.
    """

    def __init__(self, run_config: RunConfig, output_dir: Path, device: Optional[str] = None,
                 dtype: torch.dtype = torch.float32):
        self.run_config = run_config
        self.train_cfg = run_config.train
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.device = torch.device(device or ("cuda" if torch.cuda.is_available() else "cpu"))
        self.dtype = dtype
        self.audit_logger = AuditLogger(str(self.output_dir / "audit.jsonl"))

        seed_everything(self.train_cfg.seed)
        self.model = ModalityForecaster(run_config.model).to(device=self.device, dtype=dtype)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(),
            lr=self.train_cfg.lr,
            betas=tuple(self.train_cfg.betas),
            weight_decay=self.train_cfg.weight_decay,
        )
        self.scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            self.optimizer,
            T_max=self.train_cfg.schedule["t_max"],
            eta_min=self.train_cfg.lr_min,
        )
        self.start_epoch = 0
        self.start_batch = 0
        self.partial_losses: Tuple[float, float] = (0.0, 0.0)
        self.global_step = 0
        self.best_val_ade = math.inf
        self.history: List[Dict[str, Any]] = []

    @classmethod
    def from_checkpoint(cls, path: Path, output_dir: Optional[Path] = None, device: Optional[str] = None,
                        epochs: Optional[int] = None, max_steps: Optional[int] = None) -> "Trainer":
        """
        `max_steps` is a limit for this invocation only; the value stored in the
        checkpoint is dropped. `epochs` replaces the stored epoch count and the
        cosine horizon with it.
        """
        payload = load_checkpoint(path)
        stored = payload["run_config"]
        updates: Dict[str, Any] = {"max_steps": max_steps}
        if epochs is not None:
            updates["epochs"] = epochs
        try:
            train_cfg = TrainConfig(**{**stored.train.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigurationError(f"Invalid resume settings: {e}") from e
        run_config = stored.model_copy(update={"train": train_cfg})

        trainer = cls(run_config, output_dir or Path(path).parent, device=device)
        trainer.model.load_state_dict(payload["model_state"])
        if payload.get("optimizer_state") is not None:
            trainer.optimizer.load_state_dict(payload["optimizer_state"])
        if payload.get("scheduler_state") is not None:
            trainer.scheduler.load_state_dict(payload["scheduler_state"])
        trainer.scheduler.T_max = train_cfg.schedule["t_max"]
        offset = payload.get("batch_offset", 0)
        trainer.start_epoch = payload["epoch"] + (0 if offset else 1)
        trainer.start_batch = offset
        trainer.partial_losses = tuple(payload.get("partial_losses", (0.0, 0.0)))
        trainer.global_step = payload.get("global_step", 0)
        trainer.best_val_ade = payload.get("best_val_ade", math.inf)
        torch.set_rng_state(payload["torch_rng_state"])
        metrics_path = trainer.output_dir / "metrics.csv"
        if metrics_path.exists():
            previous = pd.read_csv(metrics_path)
            trainer.history = previous[previous["epoch"] < trainer.start_epoch].to_dict("records")
        logger.info(f"Resuming from {path} at epoch {trainer.start_epoch}, batch {trainer.start_batch}")
        return trainer

    def fit(self, train_windows: List[ObservationWindow],
            val_windows: Optional[List[ObservationWindow]] = None) -> Path:
        if not train_windows:
            raise DataError("Training set is empty")
        cfg = self.train_cfg
        n = len(train_windows)
        steps_per_epoch = math.ceil(n / cfg.batch_size)
        self.audit_logger.log_event("RUN_STARTED", {
            "config_hash": self.run_config.config_hash(),
            "train_windows": n,
            "val_windows": len(val_windows or []),
            "start_epoch": self.start_epoch,
            "start_batch": self.start_batch,
            "device": str(self.device),
        })
        logger.info(f"Training on {n} windows for {cfg.epochs} epochs (batch {cfg.batch_size}, device {self.device})")

        last_finite: Optional[float] = None
        completed = self.start_epoch - 1
        for epoch in range(self.start_epoch, cfg.epochs):
            resuming = epoch == self.start_epoch
            batches = self.start_batch if resuming else 0
            traj_sum, cls_sum = self.partial_losses if resuming else (0.0, 0.0)
            self.model.train()
            lr = self.optimizer.param_groups[0]["lr"]
            order, angles = epoch_plan(cfg.seed, epoch, n, cfg.augment_rotation)
            for start in range(batches * cfg.batch_size, n, cfg.batch_size):
                if cfg.max_steps is not None and self.global_step >= cfg.max_steps:
                    break
                idx = order[start:start + cfg.batch_size]
                windows = [augment_rotation(train_windows[i], angles[i]) if cfg.augment_rotation else train_windows[i]
                           for i in idx]
                batch = collate(windows, dtype=self.dtype).to(self.device)
                out = self.model(batch.history, batch.graph)
                if not torch.isfinite(out.trajectories).all() or not torch.isfinite(out.scores).all():
                    raise TrainingDivergedError(epoch, self.global_step, lr, last_finite)
                losses = total_loss(out.trajectories, out.scores, batch.future)
                if not torch.isfinite(losses.total):
                    raise TrainingDivergedError(epoch, self.global_step, lr, last_finite)

                self.optimizer.zero_grad()
                losses.total.backward()
                if cfg.grad_clip > 0:
                    torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg.grad_clip)
                self.optimizer.step()

                last_finite = float(losses.total.detach())
                traj_sum += float(losses.traj.detach())
                cls_sum += float(losses.cls.detach())
                batches += 1
                self.global_step += 1

            if batches < steps_per_epoch:
                # max_steps hit inside the epoch: the scheduler stays put until it completes
                logger.info(f"Reached max_steps={cfg.max_steps} at epoch {epoch}, batch {batches}")
                if batches:
                    self._record_epoch({
                        "epoch": epoch,
                        "lr": lr,
                        "train_loss_traj": traj_sum / batches,
                        "train_loss_cls": cls_sum / batches,
                        "val_ade": float("nan"),
                        "val_fde": float("nan"),
                    }, complete=False)
                    return self._save("final.pt", epoch, batch_offset=batches, partial_losses=(traj_sum, cls_sum))
                return self._save("final.pt", completed)

            self.scheduler.step()
            val_ade, val_fde = self.validate(val_windows)
            row = {
                "epoch": epoch,
                "lr": lr,
                "train_loss_traj": traj_sum / batches,
                "train_loss_cls": cls_sum / batches,
                "val_ade": val_ade,
                "val_fde": val_fde,
            }
            self._record_epoch(row)

            # without a validation set the latest epoch counts as best
            if math.isnan(val_ade) or val_ade < self.best_val_ade:
                if not math.isnan(val_ade):
                    self.best_val_ade = val_ade
                self._save("best.pt", epoch)
            completed = epoch

        return self._save("final.pt", completed)

    @torch.no_grad()
    def validate(self, windows: Optional[List[ObservationWindow]]):
        if not windows:
            return float("nan"), float("nan")
        predictions = NetworkPredictor(self.model, device=str(self.device)).predict(windows)
        pred = np.stack([p.trajectories for p in predictions])
        gt = np.stack([w.future for w in windows])
        ade, fde = batch_ade_fde(pred, gt, self.run_config.joint_min)
        return float(math.fsum(ade) / len(ade)), float(math.fsum(fde) / len(fde))

    def _record_epoch(self, row: Dict[str, Any], complete: bool = True):
        self.history.append(row)
        pd.DataFrame(self.history, columns=METRICS_COLUMNS).to_csv(self.output_dir / "metrics.csv", index=False)
        logger.info(
            f"Epoch {row['epoch']}{'' if complete else ' (interrupted)'}: lr={row['lr']:.3e} "
            f"traj={row['train_loss_traj']:.5f} cls={row['train_loss_cls']:.5f} "
            f"val_ade={row['val_ade']:.4f} val_fde={row['val_fde']:.4f}"
        )
        log_event("epoch_complete" if complete else "epoch_interrupted", **row)
        self.audit_logger.log_event("EPOCH_COMPLETE" if complete else "EPOCH_INTERRUPTED", row)

    def _save(self, name: str, epoch: int, batch_offset: int = 0,
              partial_losses: Tuple[float, float] = (0.0, 0.0)) -> Path:
        path = save_checkpoint(self.output_dir / name, self.run_config, self.model, self.optimizer,
                               self.scheduler, epoch, self.global_step, self.best_val_ade,
                               batch_offset=batch_offset, partial_losses=partial_losses)
        self.audit_logger.log_event("CHECKPOINT_SAVED", {"path": str(path), "epoch": epoch,
                                                         "batch_offset": batch_offset,
                                                         "best_val_ade": self.best_val_ade})
        return path


def train(run_config: RunConfig, train_windows: List[ObservationWindow], output_dir: Path,
          val_windows: Optional[List[ObservationWindow]] = None, device: Optional[str] = None) -> Path:
    return Trainer(run_config, output_dir, device=device).fit(train_windows, val_windows)


def resume(checkpoint_path: Path, train_windows: List[ObservationWindow],
           val_windows: Optional[List[ObservationWindow]] = None, output_dir: Optional[Path] = None,
           device: Optional[str] = None, epochs: Optional[int] = None, max_steps: Optional[int] = None) -> Path:
    trainer = Trainer.from_checkpoint(checkpoint_path, output_dir, device=device, epochs=epochs, max_steps=max_steps)
    return trainer.fit(train_windows, val_windows)
