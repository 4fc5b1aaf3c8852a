import json
import sys
from pathlib import Path

import pytest

# Add project root to sys.path
sys.path.append(str(Path(__file__).resolve().parent))

from src.core.audit import verify_hash_chain
from src.main import dispatch
from src.training.checkpoint import load_checkpoint

TINY = {
    "model.temporal_dim": 8,
    "model.social_dim": 8,
    "model.social_out_dim": 8,
    "model.latent_dim": 16,
    "model.modalities": 3,
    "model.heads": 2,
    "model.temporal_layers": 1,
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def train(tmp_path, tiny_config, run_name):
    code = dispatch(["train", "--dataset", "synthetic", "--config", str(tiny_config),
                     "--output-dir", str(tmp_path), "--run-name", run_name,
                     "--epochs", "1", "--max-steps", "2", "--device", "cpu"])
    assert code == 0
    return tmp_path / run_name


def echoed(out: str):
    resolved, _ = json.JSONDecoder().raw_decode(out)
    return resolved


def test_help_and_usage_errors(tmp_path):
    assert dispatch(["eval", "--help"]) == 0
    assert dispatch(["forecast"]) == 2
    assert dispatch(["eval", "--dataset", "synthetic"]) == 2  # no checkpoint/predictions/baseline


def test_missing_data_root(tmp_path, capsys):
    code = dispatch(["eval", "--dataset", "ethucy", "--holdout", "eth", "--baseline", "stationary",
                     "--data-root", str(tmp_path / "missing"), "--output-dir", str(tmp_path)])
    assert code == 1
    assert "Dataset root not found" in capsys.readouterr().err


def test_invalid_override_is_a_configuration_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model.temporal_dim": 10, "model.heads": 4}))
    code = dispatch(["complexity", "--config", str(bad), "--output-dir", str(tmp_path)])
    assert code == 1
    assert "Invalid configuration" in capsys.readouterr().err


def test_train_is_reproducible(tmp_path, tiny_config, capsys):
    first = train(tmp_path, tiny_config, "a")
    resolved = echoed(capsys.readouterr().out)
    assert resolved["config"]["model"]["modalities"] == 3
    assert resolved["config"]["dataset"] == "synthetic"
    assert len(resolved["config_hash"]) == 64 and resolved["data_hash"]

    second = train(tmp_path, tiny_config, "b")
    assert (first / "metrics.csv").read_text() == (second / "metrics.csv").read_text()
    for name in ("final.pt", "metrics.json", "metrics_table.txt", "resolved_config.json"):
        assert (first / name).exists()
    valid, errors = verify_hash_chain(first / "audit.jsonl")
    assert valid, errors
    events = [json.loads(line) for line in (first / "events.jsonl").read_text().splitlines()]
    assert events and all(e["config_hash"] == resolved["config_hash"] for e in events)
    assert any(e["message"] == "epoch_interrupted" and e["epoch"] == 0 for e in events)


def test_predict_then_evaluate_matches_checkpoint_eval(tmp_path, tiny_config, capsys):
    checkpoint = train(tmp_path, tiny_config, "run") / "final.pt"
    common = ["--dataset", "synthetic", "--output-dir", str(tmp_path), "--device", "cpu"]

    assert dispatch(["eval", "--checkpoint", str(checkpoint), "--run-name", "direct", *common]) == 0
    assert dispatch(["predict", "--checkpoint", str(checkpoint), "--run-name", "pred", *common]) == 0
    predictions = tmp_path / "pred" / "predictions.jsonl"
    assert predictions.exists()
    assert dispatch(["eval", "--from-predictions", str(predictions), "--run-name", "replay", *common]) == 0

    direct = json.loads((tmp_path / "direct" / "metrics.json").read_text())
    replay = json.loads((tmp_path / "replay" / "metrics.json").read_text())
    assert replay["average_ade"] == pytest.approx(direct["average_ade"], abs=1e-9)
    assert replay["average_fde"] == pytest.approx(direct["average_fde"], abs=1e-9)
    assert replay["sample_count"] == direct["sample_count"] == 500

    capsys.readouterr()
    assert dispatch(["plot", "--predictions", str(predictions), "--agent-id", "0", "--run-name", "plots",
                     "--dataset", "synthetic", "--output-dir", str(tmp_path)]) == 0
    assert len(list((tmp_path / "plots" / "plots").glob("*.svg"))) == 1


def test_complexity_command(tmp_path, tiny_config, capsys):
    assert dispatch(["complexity", "--config", str(tiny_config), "--output-dir", str(tmp_path),
                     "--run-name", "cx"]) == 0
    out = capsys.readouterr().out
    assert "reference" in out and "0.043" in out
    report = json.loads((tmp_path / "cx" / "complexity.json").read_text())
    assert report["param_count"] > 0 and report["flop_estimate"] > 0


def test_baseline_eval_on_synthetic(tmp_path, capsys):
    assert dispatch(["eval", "--dataset", "synthetic", "--baseline", "constant_velocity",
                     "--output-dir", str(tmp_path), "--run-name", "cv"]) == 0
    metrics = json.loads((tmp_path / "cv" / "metrics.json").read_text())
    assert metrics["k"] == 1 and metrics["sample_count"] == 500
    assert "AVG" in capsys.readouterr().out


def test_resume_continues_an_interrupted_run(tmp_path, tiny_config):
    run = train(tmp_path, tiny_config, "run")
    stopped = load_checkpoint(run / "final.pt")
    assert (stopped["epoch"], stopped["batch_offset"], stopped["global_step"]) == (0, 2, 2)

    common = ["train", "--dataset", "synthetic", "--output-dir", str(tmp_path), "--device", "cpu"]
    assert dispatch([*common, "--resume", str(run / "final.pt"), "--run-name", "more", "--max-steps", "5"]) == 0
    more = load_checkpoint(tmp_path / "more" / "final.pt")
    assert (more["epoch"], more["batch_offset"], more["global_step"]) == (0, 5, 5)
    assert more["run_config"].train.max_steps == 5

    # 1800 training windows after the validation hold-out, batch 32
    assert dispatch([*common, "--resume", str(tmp_path / "more" / "final.pt"), "--run-name", "done"]) == 0
    done = load_checkpoint(tmp_path / "done" / "final.pt")
    assert (done["epoch"], done["batch_offset"], done["global_step"]) == (0, 0, 57)
    assert (tmp_path / "done" / "best.pt").exists()
    assert (tmp_path / "done" / "metrics.json").exists()


def test_prepare_prints_window_counts(tmp_path, capsys):
    assert dispatch(["prepare", "--dataset", "synthetic", "--output-dir", str(tmp_path), "--run-name", "prep"]) == 0
    out = capsys.readouterr().out
    assert out.rstrip().splitlines()[-1].split() == ["synthetic", "2000"]
    events = [json.loads(line)["event_type"] for line in (tmp_path / "prep" / "audit.jsonl").read_text().splitlines()]
    assert "DATA_PREPARED" in events


def test_file_overrides_reach_data_and_reference_settings(tmp_path, capsys):
    overrides = tmp_path / "overrides.json"
    overrides.write_text(json.dumps({**TINY, "data.synthetic.windows": 50,
                                     "evaluation.reference.params_m": 1.5}))
    assert dispatch(["prepare", "--dataset", "synthetic", "--config", str(overrides),
                     "--output-dir", str(tmp_path), "--run-name", "prep"]) == 0
    out = capsys.readouterr().out
    assert echoed(out)["config"]["data"]["synthetic_windows"] == 50
    assert out.rstrip().splitlines()[-1].split() == ["synthetic", "50"]

    assert dispatch(["complexity", "--config", str(overrides), "--output-dir", str(tmp_path),
                     "--run-name", "cx"]) == 0
    report = json.loads((tmp_path / "cx" / "complexity.json").read_text())
    assert report["reference_params_m"] == 1.5 and report["reference_flops_m"] == 1.828
