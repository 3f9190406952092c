"""Pipeline configuration: one dataclass per module, plain-text INI I/O.

The file format is `key = value` with one section per module ([pipeline],
[tracker], [splats], [init]); command-line overrides use
`section.key=value`. See configs/default.cfg for the documented key list.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field

MODE_SEQUENTIAL = "deterministic-sequential"
MODE_REALTIME = "realtime-decoupled"


@dataclass
class TrackerConfig:
    pyramid_levels: int = 4
    target_points: int = 250
    select_cell: int = 8
    select_margin: float = 7.0 / 255.0
    window_size: int = 7
    align_iterations: int = 15
    ba_iterations: int = 6
    min_inlier_fraction: float = 0.3
    idepth_min: float = 0.1
    idepth_max: float = 10.0
    idepth_samples: int = 64
    kf_flow_threshold: float = 1.5
    kf_flow_t_threshold: float = 1.5
    kf_brightness_threshold: float = 0.2
    fuse_gate: float = 0.5
    fuse_enabled: bool = True  # coupling switch: splat-map depth into M-step
    optimize_intrinsics: bool = False


@dataclass
class SplatsConfig:
    lam: float = 0.2
    lam_d: float = 500.0
    lam_n: float = 0.1
    e_iters: int = 30
    batch_size: int = 8
    trained_factor: float = 1.5
    depth_term: bool = True  # coupling switch: semi-dense depths into E-step
    densify_interval: int = 100
    densify_grad_threshold: float = 2e-4
    densify_min_iters: int = 100
    densify_scale_fraction: float = 0.01
    prune_opacity: float = 0.005
    prune_footprint: float = 0.2
    max_splats: int = 200000


@dataclass
class InitConfig:
    variant: str = "obs"  # obs | pre | int | knn | const
    opacity_preset: float = 0.05
    sqrt_scales: bool = True
    patch_radius: int = 4
    const_scale_px: float = 3.0
    knn_k: int = 3


@dataclass
class PipelineConfig:
    mode: str = MODE_SEQUENTIAL
    seed: int = 0
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    splats: SplatsConfig = field(default_factory=SplatsConfig)
    init: InitConfig = field(default_factory=InitConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in (MODE_SEQUENTIAL, MODE_REALTIME):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tracker.window_size < 3:
            raise ValueError("window size must be >= 3")
        if min(self.splats.lam, self.splats.lam_d, self.splats.lam_n) < 0:
            raise ValueError("loss weights must be >= 0")
        if min(self.splats.e_iters, self.tracker.ba_iterations) < 1:
            raise ValueError("iteration budgets must be >= 1")

    def copy(self) -> "PipelineConfig":
        return PipelineConfig(
            mode=self.mode,
            seed=self.seed,
            tracker=dataclasses.replace(self.tracker),
            splats=dataclasses.replace(self.splats),
            init=dataclasses.replace(self.init),
        )


_SECTIONS = {"tracker": TrackerConfig, "splats": SplatsConfig, "init": InitConfig}


def _coerce(target_type, raw: str):
    if target_type is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return target_type(raw)


def _apply(cfg_obj, key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(cfg_obj)}
    if key not in fields:
        raise KeyError(f"unknown key {key!r} for {type(cfg_obj).__name__}")
    current = getattr(cfg_obj, key)
    setattr(cfg_obj, key, _coerce(type(current), raw))


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Build a PipelineConfig from an INI file plus `section.key=value`
    override strings (CLI flags win over file values)."""
    cfg = PipelineConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path) as f:
            parser.read_file(f)
        for section in parser.sections():
            for key, raw in parser.items(section):
                set_option(cfg, f"{section}.{key}", raw)
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"override must be section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        set_option(cfg, dotted.strip(), raw.strip())
    cfg.validate()
    return cfg


def set_option(cfg: PipelineConfig, dotted: str, raw: str):
    if "." not in dotted:
        raise ValueError(f"option must be section.key: {dotted!r}")
    section, key = dotted.split(".", 1)
    if section == "pipeline":
        if key == "mode":
            cfg.mode = raw
        elif key == "seed":
            cfg.seed = int(raw)
        else:
            raise KeyError(f"unknown [pipeline] key {key!r}")
    elif section in _SECTIONS:
        _apply(getattr(cfg, section), key, raw)
    else:
        raise KeyError(f"unknown section {section!r}")


def save_config(cfg: PipelineConfig, path):
    parser = configparser.ConfigParser()
    parser["pipeline"] = {"mode": cfg.mode, "seed": str(cfg.seed)}
    for name in _SECTIONS:
        obj = getattr(cfg, name)
        parser[name] = {
            f.name: str(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        }
    with open(path, "w") as f:
        parser.write(f)


def naive_coupling_mode(cfg: PipelineConfig) -> PipelineConfig:
    """Ablation baseline: tracking and mapping run with no mutual influence.

    Exactly two switches change: the splat-map depth no longer feeds the
    M-step (fuse_enabled off) and the semi-dense depth term leaves the
    E-step loss (depth_term off). Splat initialization still consumes the
    BA-derived semi-dense maps.
    """
    out = cfg.copy()
    out.tracker.fuse_enabled = False
    out.splats.depth_term = False
    return out
