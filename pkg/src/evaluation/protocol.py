import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Any, List, Optional, Tuple

from src.core.audit import AuditLogger
from src.core.errors import DataError
from src.core.interfaces import TrajectoryPredictor
from src.core.logger import logging
from src.core.models import MetricsReport, RunConfig
from src.core.types import ObservationWindow, ModalityPrediction
from src.evaluation.complexity import count_parameters, estimate_flops
from src.evaluation.metrics import MetricsEngine, save_metrics
from src.modules.data.datasets import UNITS, AVERAGING
from src.modules.data.splits import WindowSet, leave_one_out_split, validation_split, ethucy_holdouts
from src.modules.network.forecaster import NetworkPredictor
from src.training.checkpoint import load_checkpoint, restore_model
from src.training.engine import Trainer

logger = logging.getLogger(__name__)


def evaluate(predictor: TrajectoryPredictor, test_windows: List[ObservationWindow], dataset: str,
             joint_min: bool = False, param_count: Optional[int] = None,
             flop_estimate: Optional[int] = None) -> Tuple[MetricsReport, List[ModalityPrediction]]:
    if not test_windows:
        raise DataError("Cannot evaluate an empty test set")
    predictions = predictor.predict(test_windows)
    engine = MetricsEngine.from_predictions(test_windows, predictions, joint_min)
    report = engine.report(
        dataset=dataset,
        unit=UNITS.get(dataset, "meters"),
        k=predictions[0].k,
        joint_min=joint_min,
        average=AVERAGING.get(dataset, "scene_mean"),
        param_count=param_count,
        flop_estimate=flop_estimate,
    )
    logger.info(f"{predictor.name}: ADE={report.average_ade:.4f} FDE={report.average_fde:.4f} "
                f"over {report.sample_count} windows")
    return report, predictions


def evaluate_checkpoint(checkpoint_path: Path, test_windows: List[ObservationWindow], dataset: str,
                        joint_min: bool = False, device: Optional[str] = None) -> Tuple[MetricsReport, List[ModalityPrediction]]:
    payload = load_checkpoint(checkpoint_path)
    model = restore_model(payload)
    return evaluate(NetworkPredictor(model, device=device), test_windows, dataset, joint_min,
                    param_count=count_parameters(model), flop_estimate=estimate_flops(model))


class LeaveOneOutRunner:
    """Trains and evaluates one model per held-out ETH/UCY scene."""

    def __init__(self, run_config: RunConfig, output_dir: Path, device: Optional[str] = None):
        self.run_config = run_config
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.device = device
        self.audit_logger = AuditLogger(str(self.output_dir / "audit.jsonl"))

    def run(self, dataset_windows: WindowSet, holdouts: Optional[List[str]] = None) -> Dict[str, Any]:
        holdouts = holdouts or ethucy_holdouts(dataset_windows)
        logger.info(f"Leave-one-out over {holdouts}")
        summary = {
            "config_hash": self.run_config.config_hash(),
            "data_hash": self.run_config.data_hash,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "joint_min": self.run_config.joint_min,
            "runs": {},
        }
        for i, scene in enumerate(holdouts):
            logger.info(f"Holdout {i + 1}/{len(holdouts)}: {scene}")
            train, test = leave_one_out_split(dataset_windows, scene)
            train, val = validation_split(train, self.run_config.train.validation_fraction)
            run_dir = self.output_dir / scene
            scene_config = self.run_config.model_copy(update={"holdout": scene})
            trainer = Trainer(scene_config, run_dir, device=self.device)
            final = trainer.fit(train, val)
            best = run_dir / "best.pt"
            if not best.exists():
                best = final
            report, _ = evaluate_checkpoint(best, test, "ethucy", self.run_config.joint_min, self.device)
            save_metrics(report.model_dump(), run_dir / "metrics.json")
            scene_metrics = report.scenes[scene]
            summary["runs"][scene] = {"ade": scene_metrics.ade, "fde": scene_metrics.fde,
                                      "samples": scene_metrics.samples, "checkpoint": str(best)}
            self.audit_logger.log_event("EVAL_COMPLETE", {"holdout": scene, "ade": scene_metrics.ade,
                                                          "fde": scene_metrics.fde})
        runs = summary["runs"]
        summary["average"] = {
            "ade": math.fsum(r["ade"] for r in runs.values()) / len(runs),
            "fde": math.fsum(r["fde"] for r in runs.values()) / len(runs),
        }
        summary_path = self.output_dir / "leave_one_out_summary.json"
        with open(summary_path, "w") as f:
            json.dump(summary, f, indent=2)
        logger.info(f"Leave-one-out complete. Summary saved to {summary_path}")
        return summary


def run_leave_one_out(run_config: RunConfig, dataset_windows: WindowSet, output_dir: Path,
                      device: Optional[str] = None) -> Dict[str, Any]:
    return LeaveOneOutRunner(run_config, output_dir, device).run(dataset_windows)
