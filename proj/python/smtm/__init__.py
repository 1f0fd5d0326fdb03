"""Streaming early-exit CNN inference with semantic center memory."""

from ._smtm import (
    CenterStore,
    Model,
    SmtmError,
    ablation_run,
    adaptive_cache_size,
    baseline_run,
    center_memory_bytes,
    class_score,
    cosine_similarity,
    default_config,
    encode_all_exits,
    encode_gap,
    fixture_model,
    load_centers,
    load_model,
    make_scenario,
    run_stream,
    sweep_tau,
    warm_up,
)

__all__ = [
    "CenterStore",
    "Model",
    "SmtmError",
    "ablation_run",
    "adaptive_cache_size",
    "baseline_run",
    "center_memory_bytes",
    "class_score",
    "cosine_similarity",
    "default_config",
    "encode_all_exits",
    "encode_gap",
    "fixture_model",
    "load_centers",
    "load_model",
    "make_scenario",
    "run_stream",
    "sweep_tau",
    "warm_up",
]
