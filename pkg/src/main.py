import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add project root to sys.path
sys.path.append(str(Path(__file__).resolve().parent.parent))

from pydantic import ValidationError

from src.core.audit import AuditLogger
from src.core.config import config, apply_overrides, load_override_file
from src.core.errors import ForecasterError, ConfigurationError
from src.core.logger import setup_logging, log_event, logging
from src.core.models import RunConfig, ModelConfig, TrainConfig, DataConfig
from src.evaluation.baselines import StationaryBaseline, ConstantVelocityBaseline
from src.evaluation.complexity import complexity_report, format_complexity
from src.evaluation.metrics import save_metrics
from src.evaluation.predictions import read_predictions, write_predictions, evaluate_predictions
from src.evaluation.protocol import evaluate, evaluate_checkpoint, run_leave_one_out
from src.modules.data.cache import WindowCache
from src.modules.data.datasets import UNITS, AVERAGING, data_hash, load_windows, split_windows
from src.modules.data.splits import validation_split
from src.modules.network.forecaster import ModalityForecaster, NetworkPredictor
from src.training.checkpoint import load_checkpoint, restore_model
from src.training.engine import train, resume
from src.ui.analytics.reporting import (
    export_report_json, export_report_csv, format_report_table, format_leave_one_out_table
)
from src.ui.plots import plot_predictions

logger = logging.getLogger("main")

COMMANDS = ("prepare", "train", "eval", "predict", "complexity", "plot")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON/YAML file of flat dotted overrides (model.latent_dim: 16)")
    p.add_argument("--output-dir", type=Path, help="Artifact root (default: $FORECASTER_OUTPUT_DIR or config system.output_dir)")
    p.add_argument("--run-name", help="Subdirectory under the output root (default derived from dataset/holdout/seed)")
    p.add_argument("--log-level", help="Override system.log_level")
    p.add_argument("--seed", type=int, help="Random seed (default train.seed = 0)")


def _data(p: argparse.ArgumentParser):
    p.add_argument("--dataset", choices=["ethucy", "sdd", "synthetic"], default="ethucy")
    p.add_argument("--data-root", help="Dataset root (default data.<dataset>.root)")
    p.add_argument("--holdout", help="ETH/UCY held-out scene: eth, hotel, univ, zara1, zara2 (train also accepts 'all')")
    p.add_argument("--max-dist", type=float, help="Max interaction distance (default 10 m ETH/UCY, 200 px SDD)")
    p.add_argument("--anchor-stride", type=int, help="Anchor frame stride in grid steps (default 1)")
    p.add_argument("--no-cache", action="store_true", help="Skip the window cache")


def _model(p: argparse.ArgumentParser):
    p.add_argument("--no-patch", action="store_true", default=None, help="Replace patch embedding by a flat MLP")
    p.add_argument("--no-social", action="store_true", default=None, help="Use the learned isolated-agent feature for every agent")
    p.add_argument("--edge-raw-vector", action="store_true", default=None, help="Feed (dx, dy, cos) to the edge MLP")
    p.add_argument("--modulation", choices=["softmax", "singleton"], help="Modality modulation (default softmax)")
    p.add_argument("--modalities", type=int, help="K (default 20)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forecaster", description="Multi-modal trajectory forecasting harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="Parse datasets, cut windows, fill the window cache")
    _common(p); _data(p)

    p = sub.add_parser("train", help="Train (ETH/UCY leave-one-out, SDD fixed split, synthetic)")
    _common(p); _data(p); _model(p)
    p.add_argument("--epochs", type=int, help="Default 300 ETH/UCY, 200 SDD")
    p.add_argument("--batch-size", type=int, help="Default 32 ETH/UCY, 128 SDD")
    p.add_argument("--lr", type=float, help="Initial learning rate (default 5e-4)")
    p.add_argument("--max-steps", type=int, help="Stop after this many optimizer steps")
    p.add_argument("--no-augment", action="store_true", help="Disable random rotation augmentation")
    p.add_argument("--resume", type=Path, help="Continue from a checkpoint")
    p.add_argument("--device", help="torch device (default cuda if available)")

    p = sub.add_parser("eval", help="Best-of-K ADE/FDE on the test split")
    _common(p); _data(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path)
    src.add_argument("--from-predictions", type=Path, help="Evaluate a prediction JSON-lines file")
    src.add_argument("--baseline", choices=["stationary", "constant_velocity"])
    p.add_argument("--joint-min", action="store_true", default=None, help="Use the ADE-best modality for FDE")
    p.add_argument("--device")

    p = sub.add_parser("predict", help="Write K world-frame predictions per test window")
    _common(p); _data(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--output", type=Path, help="Prediction file (default <run dir>/predictions.jsonl)")
    p.add_argument("--device")

    p = sub.add_parser("complexity", help="Parameter count, FLOPs and latency")
    _common(p); _model(p)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--dataset", choices=["ethucy", "sdd", "synthetic"], default="ethucy")

    p = sub.add_parser("plot", help="One SVG per predicted window")
    _common(p); _data(p)
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--agent-id", type=int, action="append", dest="agent_ids")
    p.add_argument("--limit", type=int)
    return parser


def _present(values: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in values.items() if v is not None}


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    dataset = getattr(args, "dataset", "ethucy")
    flags = {
        "system.log_level": getattr(args, "log_level", None),
        "train.seed": getattr(args, "seed", None),
        "train.lr": getattr(args, "lr", None),
        f"train.{dataset}.epochs": getattr(args, "epochs", None),
        f"train.{dataset}.batch_size": getattr(args, "batch_size", None),
        "train.max_steps": getattr(args, "max_steps", None),
        f"data.{dataset}.max_distance": getattr(args, "max_dist", None),
        "data.anchor_stride": getattr(args, "anchor_stride", None),
        "model.no_patch": getattr(args, "no_patch", None),
        "model.no_social": getattr(args, "no_social", None),
        "model.edge_raw_vector": getattr(args, "edge_raw_vector", None),
        "model.modulation": getattr(args, "modulation", None),
        "model.modalities": getattr(args, "modalities", None),
        "evaluation.joint_min": getattr(args, "joint_min", None),
    }
    if getattr(args, "no_augment", False):
        flags["train.augment_rotation"] = False
    return _present(flags)


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """config.yaml <- --config file <- flags, validated into a RunConfig."""
    file_overrides = load_override_file(args.config) if args.config else {}
    overrides = {**file_overrides, **flag_overrides(args)}
    merged = apply_overrides(config.snapshot(), overrides)
    dataset = getattr(args, "dataset", "ethucy")
    data, model, train_section = merged.get("data", {}), merged.get("model", {}), merged.get("train", {})
    per_data = data.get(dataset, {})
    per_train = train_section.get(dataset, {})
    try:
        model_cfg = ModelConfig(obs_len=data.get("obs_len", 8), pred_len=data.get("pred_len", 12), **model)
        train_cfg = TrainConfig(
            dataset=dataset,
            batch_size=per_train.get("batch_size", 32),
            epochs=per_train.get("epochs", 300),
            lr=train_section.get("lr", 5e-4),
            lr_min=train_section.get("lr_min", 0.0),
            betas=tuple(train_section.get("betas", (0.9, 0.999))),
            weight_decay=train_section.get("weight_decay", 0.0),
            grad_clip=train_section.get("grad_clip", 10.0),
            augment_rotation=train_section.get("augment_rotation", True),
            seed=train_section.get("seed", 0),
            max_distance=per_data.get("max_distance", 10.0),
            max_steps=train_section.get("max_steps"),
            validation_fraction=data.get("validation_fraction", 0.1),
        )
        data_cfg = DataConfig(
            obs_len=data.get("obs_len", 8),
            pred_len=data.get("pred_len", 12),
            anchor_stride=data.get("anchor_stride", 1),
            max_distance=per_data.get("max_distance", 10.0),
            frame_stride=data.get("sdd", {}).get("frame_stride", 12),
            **_present({
                "root": per_data.get("root"),
                "scenes": data.get("ethucy", {}).get("scenes"),
                "test_videos": data.get("sdd", {}).get("test_videos"),
                "synthetic_windows": data.get("synthetic", {}).get("windows"),
                "cache_dir": data.get("cache_dir"),
            }),
        )
        reference = merged.get("evaluation", {}).get("reference", {})
        run_config = RunConfig(
            command=args.command,
            dataset=dataset,
            data_root=getattr(args, "data_root", None),
            holdout=getattr(args, "holdout", None),
            output_dir=str(args.output_dir or config.output_dir()),
            seed=train_cfg.seed,
            joint_min=bool(merged.get("evaluation", {}).get("joint_min", False)),
            model=model_cfg,
            train=train_cfg,
            data=data_cfg,
            overrides=overrides,
            **_present({"reference_params_m": reference.get("params_m"),
                        "reference_flops_m": reference.get("flops_m")}),
        )
    except (ValidationError, TypeError) as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e
    return run_config


def run_directory(args: argparse.Namespace, run_config: RunConfig) -> Path:
    name = args.run_name or "_".join(
        str(p) for p in (args.command, run_config.dataset, run_config.holdout, f"seed{run_config.seed}") if p)
    path = Path(run_config.output_dir) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def echo_config(run_config: RunConfig, run_dir: Path):
    resolved = {
        "config": run_config.model_dump(mode="json"),
        "config_hash": run_config.config_hash(),
        "data_hash": run_config.data_hash,
    }
    text = json.dumps(resolved, indent=2, sort_keys=True)
    print(text)
    (run_dir / "resolved_config.json").write_text(text + "\n", encoding="utf-8")


def _windows(args, run_config: RunConfig, run_dir: Path):
    if getattr(args, "no_cache", False):
        return load_windows(run_config)
    cache_dir = Path(run_config.data.cache_dir) if run_config.data.cache_dir else run_dir.parent / "cache"
    return load_windows(run_config, WindowCache(cache_dir))


def cmd_prepare(args, run_config: RunConfig, run_dir: Path, audit: AuditLogger) -> int:
    windows = _windows(args, run_config, run_dir)
    counts = {scene: len(ws) for scene, ws in windows.items()}
    for scene, n in counts.items():
        print(f"{scene:<24}{n:>10}")
    audit.log_event("DATA_PREPARED", {"counts": counts, "data_hash": run_config.data_hash})
    return 0


def cmd_train(args, run_config: RunConfig, run_dir: Path, audit: AuditLogger) -> int:
    windows = _windows(args, run_config, run_dir)
    if run_config.dataset == "ethucy" and (run_config.holdout or "").lower() == "all":
        summary = run_leave_one_out(run_config, windows, run_dir, device=args.device)
        print(format_leave_one_out_table(summary))
        return 0
    train_set, test = split_windows(run_config, windows)
    train_set, val = validation_split(train_set, run_config.train.validation_fraction)
    if args.resume:
        final = resume(args.resume, train_set, val, output_dir=run_dir, device=args.device,
                       epochs=args.epochs, max_steps=args.max_steps)
    else:
        final = train(run_config, train_set, run_dir, val_windows=val, device=args.device)
    best = run_dir / "best.pt"
    checkpoint = best if best.exists() else final
    report, _ = evaluate_checkpoint(checkpoint, test, run_config.dataset, run_config.joint_min, args.device)
    _emit_report(report, run_dir, audit)
    return 0


def _emit_report(report, run_dir: Path, audit: AuditLogger):
    export_report_json(report, run_dir / "metrics.json")
    export_report_csv(report, run_dir / "metrics_table.csv")
    table = format_report_table(report)
    (run_dir / "metrics_table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    summary = {"dataset": report.dataset, "ade": report.average_ade,
               "fde": report.average_fde, "samples": report.sample_count}
    log_event("eval_complete", **summary)
    audit.log_event("EVAL_COMPLETE", summary)


def cmd_eval(args, run_config: RunConfig, run_dir: Path, audit: AuditLogger) -> int:
    windows = _windows(args, run_config, run_dir)
    _, test = split_windows(run_config, windows)
    dataset = run_config.dataset
    if args.from_predictions:
        header, records = read_predictions(args.from_predictions)
        report = evaluate_predictions(records, test, dataset, unit=UNITS[dataset],
                                      joint_min=run_config.joint_min, average=AVERAGING[dataset])
    elif args.baseline:
        predictor = StationaryBaseline(run_config.data.pred_len) if args.baseline == "stationary" \
            else ConstantVelocityBaseline(run_config.data.pred_len)
        report, _ = evaluate(predictor, test, dataset, run_config.joint_min)
    else:
        report, _ = evaluate_checkpoint(args.checkpoint, test, dataset, run_config.joint_min, args.device)
    _emit_report(report, run_dir, audit)
    return 0


def cmd_predict(args, run_config: RunConfig, run_dir: Path, audit: AuditLogger) -> int:
    windows = _windows(args, run_config, run_dir)
    _, test = split_windows(run_config, windows)
    model = restore_model(load_checkpoint(args.checkpoint))
    predictions = NetworkPredictor(model, device=args.device).predict(test)
    output = args.output or run_dir / "predictions.jsonl"
    write_predictions(output, test, predictions, unit=UNITS[run_config.dataset])
    audit.log_event("PREDICTIONS_WRITTEN", {"path": str(output), "count": len(predictions)})
    print(output)
    return 0


def cmd_complexity(args, run_config: RunConfig, run_dir: Path, audit: AuditLogger) -> int:
    if args.checkpoint:
        model = restore_model(load_checkpoint(args.checkpoint))
    else:
        model = ModalityForecaster(run_config.model)
    report = complexity_report(model, run_config.reference_params_m, run_config.reference_flops_m)
    save_metrics(report.model_dump(), run_dir / "complexity.json")
    print(format_complexity(report))
    return 0


def cmd_plot(args, run_config: RunConfig, run_dir: Path, audit: AuditLogger) -> int:
    windows = _windows(args, run_config, run_dir)
    _, test = split_windows(run_config, windows)
    plot_predictions(args.predictions, test, run_dir / "plots", agent_ids=args.agent_ids, limit=args.limit)
    return 0


HANDLERS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "complexity": cmd_complexity,
    "plot": cmd_plot,
}


def dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        run_config = resolve_run_config(args)
        if args.command != "complexity":
            run_config = run_config.model_copy(update={"data_hash": data_hash(run_config)})
        run_dir = run_directory(args, run_config)
        setup_logging(run_dir, run_config.overrides.get("system.log_level"),
                      context={"config_hash": run_config.config_hash(), "data_hash": run_config.data_hash})
        echo_config(run_config, run_dir)
        audit = AuditLogger(str(run_dir / "audit.jsonl"))
        return HANDLERS[args.command](args, run_config, run_dir, audit)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ForecasterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
