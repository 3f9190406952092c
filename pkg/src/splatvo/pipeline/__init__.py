"""EM orchestration: configuration, the per-frame loop, and run modes."""

from .config import (
    MODE_REALTIME,
    MODE_SEQUENTIAL,
    InitConfig,
    PipelineConfig,
    SplatsConfig,
    TrackerConfig,
    load_config,
    naive_coupling_mode,
    save_config,
    set_option,
)
from .slam import RunReport, SlamEngine, run_slam, select_e_step_batch

__all__ = [
    "InitConfig",
    "MODE_REALTIME",
    "MODE_SEQUENTIAL",
    "PipelineConfig",
    "RunReport",
    "SlamEngine",
    "SplatsConfig",
    "TrackerConfig",
    "load_config",
    "naive_coupling_mode",
    "run_slam",
    "save_config",
    "select_e_step_batch",
    "set_option",
]
