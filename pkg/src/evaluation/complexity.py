import time
import numpy as np
import torch
from torch.utils.flop_counter import FlopCounterMode
from typing import List, Optional

from src.core.models import ComplexityReport, ModelConfig
from src.core.types import ObservationWindow
from src.modules.network.forecaster import ModalityForecaster, collate

CONSISTENCY_NOTE = (
    "Counts follow the configured dimensions. The reference figures cannot be "
    "reached with them: the K dedicated (L*F -> H -> H) modality MLPs alone hold "
    "K*((L*F+1)*H + (H+1)*H) parameters. FLOPs count one multiply-accumulate as 2; "
    "the reference convention is unknown, so the comparison is indicative only."
)


def count_parameters(model: torch.nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def probe_window(cfg: ModelConfig, neighbors: int = 1) -> ObservationWindow:
    """Single agent walking along x with `neighbors` neighbors, the forward pass complexity is quoted for."""
    steps = np.arange(-(cfg.obs_len - 1), 1, dtype=np.float64)
    history = np.stack([0.4 * steps, np.zeros_like(steps)], axis=-1)
    return ObservationWindow(
        scene="probe",
        agent_id=0,
        anchor_frame=0,
        origin=np.zeros(2),
        history=history,
        future=np.zeros((cfg.pred_len, 2)),
        velocity=history[-1] - history[-2],
        neighbor_ids=list(range(1, neighbors + 1)),
        neighbor_histories=np.repeat(history[None], neighbors, axis=0),
        neighbor_offsets=np.tile([[1.0, 1.0]], (neighbors, 1)),
    )


def estimate_flops(model: ModalityForecaster, windows: Optional[List[ObservationWindow]] = None) -> int:
    """Forward FLOPs for `windows` (default: one agent, one neighbor)."""
    windows = windows or [probe_window(model.cfg)]
    dtype = next(model.parameters()).dtype
    batch = collate(windows, dtype=dtype)
    was_training = model.training
    model.eval()
    try:
        # grad mode stays on so the transformer layers take their regular
        # (countable) path rather than the fused inference kernel
        with FlopCounterMode(display=False) as counter:
            model(batch.history, batch.graph)
    finally:
        model.train(was_training)
    return int(counter.get_total_flops())


def measure_latency(model: ModalityForecaster, windows: Optional[List[ObservationWindow]] = None,
                    repeats: int = 20, warmup: int = 3) -> float:
    """Mean wall time of one inference forward pass, in milliseconds."""
    windows = windows or [probe_window(model.cfg)]
    dtype = next(model.parameters()).dtype
    batch = collate(windows, dtype=dtype)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for _ in range(warmup):
                model(batch.history, batch.graph)
            start = time.perf_counter()
            for _ in range(repeats):
                model(batch.history, batch.graph)
            elapsed = time.perf_counter() - start
    finally:
        model.train(was_training)
    return 1000.0 * elapsed / repeats


def complexity_report(model: ModalityForecaster, reference_params_m: float = 0.043,
                      reference_flops_m: float = 1.828, with_latency: bool = True) -> ComplexityReport:
    return ComplexityReport(
        param_count=count_parameters(model),
        flop_estimate=estimate_flops(model),
        latency_ms=measure_latency(model) if with_latency else None,
        reference_params_m=reference_params_m,
        reference_flops_m=reference_flops_m,
        note=CONSISTENCY_NOTE,
    )


def format_complexity(report: ComplexityReport) -> str:
    lines = [
        f"{'':<12}{'#Param (M)':>12}{'FLOPs (M)':>12}",
        f"{'this model':<12}{report.param_count / 1e6:>12.3f}{report.flop_estimate / 1e6:>12.3f}",
        f"{'reference':<12}{report.reference_params_m:>12.3f}{report.reference_flops_m:>12.3f}",
    ]
    if report.latency_ms is not None:
        lines.append(f"latency: {report.latency_ms:.3f} ms per single-agent forward pass")
    lines.append(f"note: {report.note}")
    return "\n".join(lines)
