import sys
import tempfile
from pathlib import Path

# Add project root to sys.path
sys.path.append(str(Path(__file__).resolve().parent))

from src.core.audit import verify_hash_chain
from src.core.logger import setup_logging, logging
from src.core.models import ModelConfig, RunConfig, TrainConfig
from src.evaluation.baselines import ConstantVelocityBaseline, StationaryBaseline
from src.evaluation.complexity import complexity_report, format_complexity
from src.evaluation.predictions import read_predictions, write_predictions, evaluate_predictions
from src.evaluation.protocol import evaluate, evaluate_checkpoint
from src.modules.data.splits import validation_split
from src.modules.data.synthetic import synthetic_windows
from src.training.checkpoint import load_checkpoint, restore_model
from src.training.engine import Trainer
from src.ui.analytics.reporting import format_report_table
from src.ui.plots import plot_predictions


def verify_system():
    """Synthetic end-to-end pass: baselines, training, prediction replay and plots, complexity."""
    work = Path(tempfile.mkdtemp(prefix="forecaster_verify_"))
    setup_logging(work)
    logger = logging.getLogger("verification")
    logger.info(f"Starting verification in {work}")

    print("\n[Test 1] Baselines on 200 synthetic windows...")
    test = synthetic_windows(200, seed=1)
    for predictor in (StationaryBaseline(), ConstantVelocityBaseline()):
        report, _ = evaluate(predictor, test, "synthetic")
        print(f"{predictor.name:<20} ADE={report.average_ade:.4f} FDE={report.average_fde:.4f}")

    print("\n[Test 2] Training a small forecaster for 1 epoch...")
    run_config = RunConfig(
        command="train",
        dataset="synthetic",
        output_dir=str(work),
        model=ModelConfig(temporal_dim=16, social_dim=16, social_out_dim=16, latent_dim=64, modalities=5),
        train=TrainConfig(dataset="synthetic", batch_size=32, epochs=1),
    )
    train, val = validation_split(synthetic_windows(400, seed=0, scene="synthetic-train"), 0.1)
    Trainer(run_config, work, device="cpu").fit(train, val)
    report, predictions = evaluate_checkpoint(work / "best.pt", test, "synthetic", device="cpu")
    print(format_report_table(report))

    print("\n[Test 3] Prediction file replay...")
    path = write_predictions(work / "predictions.jsonl", test, predictions)
    _, records = read_predictions(path)
    replay = evaluate_predictions(records, test, "synthetic")
    if abs(replay.average_ade - report.average_ade) < 1e-9:
        print("SUCCESS: replayed metrics match in-process evaluation.")
    else:
        print(f"FAILURE: replay ADE {replay.average_ade} != {report.average_ade}")

    plots = plot_predictions(path, test, work / "plots", limit=3)
    print(f"Plotted {len(plots)} windows to {work / 'plots'}")

    print("\n[Test 4] Audit chain...")
    valid, errors = verify_hash_chain(work / "audit.jsonl")
    print("SUCCESS: audit chain intact." if valid else f"FAILURE: {errors}")

    print("\n[Test 5] Complexity...")
    model = restore_model(load_checkpoint(work / "best.pt"))
    print(format_complexity(complexity_report(model)))

    logger.info("Verification Complete.")


if __name__ == "__main__":
    verify_system()
