import dataclasses
import logging
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, get_type_hints

import yaml

from headcam.augment import AugmentConfig, ContrastiveAugmentConfig
from headcam.errors import ConfigError, DataFileNotFoundError
from headcam.fixtures import EpisodicWorldConfig, ShapeWorldConfig
from headcam.importers import DataConfig
from headcam.objectives import TrainConfig
from headcam.probing import ProbeConfig, SplitSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepAxes:
    """Factor values of the temporal classification sweep."""

    fps_values: Tuple[float, ...] = (1.0, 0.5)
    segment_lengths: Tuple[float, ...] = (25.0, 200.0)
    augment_values: Tuple[bool, ...] = (True, False)
    seeds: Tuple[int, ...] = (0,)


@dataclass(frozen=True)
class AnalysisConfig:
    """Settings of the representation analyses.

    Attributes:
        layers (Tuple[str, ...]): Layers whose selectivity is measured; empty for all.
        csi_split_half (bool): Choose the preferred class on one half of the images, measure on the other.
        top_images (bool): Export top-activating image strips of the most selective features.
        top_features (int): Features exported per layer.
        sample_size (int): Images sampled before ranking.
        top_k (int): Images per strip.
        cam_images (int): Images to explain with attention maps.
        cam_classes (Tuple[str, ...]): Classes to explain; empty for all.
        cam_std_on_raw (bool): Normalize maps by the deviation of the raw map.
        sweep (SweepAxes): Factor grid for the sweep.
    """

    layers: Tuple[str, ...] = ()
    csi_split_half: bool = False
    top_images: bool = False
    top_features: int = 10
    sample_size: int = 1024
    top_k: int = 10
    cam_images: int = 8
    cam_classes: Tuple[str, ...] = ()
    cam_std_on_raw: bool = False
    sweep: SweepAxes = field(default_factory=SweepAxes)


@dataclass(frozen=True)
class SynthConfig:
    episodic: EpisodicWorldConfig = field(default_factory=EpisodicWorldConfig)
    shapes: ShapeWorldConfig = field(default_factory=ShapeWorldConfig)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of a run; every section is validated on construction."""

    data: DataConfig = field(default_factory=DataConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    contrastive_augment: ContrastiveAugmentConfig = field(default_factory=ContrastiveAugmentConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    output_dir: str = "output"
    seed: int = 0
    workers: int = 0


# Sections that receive the run seed unless they set their own
SEEDED_SECTIONS = ("train", "probe", "split")
TOP_LEVEL_KEYS = {"data", "augment", "contrastive_augment", "train", "probe", "analysis", "synth", "output_dir",
                  "seed", "workers"}


def _merge(base: dict, update: dict) -> dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path_file: Path, _seen: Optional[set] = None) -> dict:
    """Reads a YAML run config, merging its `include` files first; the including file wins.

    Raises:
        DataFileNotFoundError: If a file does not exist.
        ConfigError: If a document is not a mapping or includes itself.
    """
    seen = _seen or set()
    path_file = path_file.resolve()
    if path_file in seen:
        raise ConfigError(f"Config '{path_file}' includes itself.")
    if not path_file.exists():
        raise DataFileNotFoundError(f"No config file '{path_file}' found.")
    with open(path_file, encoding="utf-8") as file:
        document = yaml.safe_load(file) or {}
    if not isinstance(document, dict):
        raise ConfigError(f"Config '{path_file}' is not a mapping.")
    merged = {}
    for include in document.pop("include", []) or []:
        merged = _merge(merged, read_config_file(path_file.parent / include, seen | {path_file}))
    return _merge(merged, document)


def _build(cls, values: Any, key_path: str):
    """Instantiates a (nested) dataclass from a mapping, rejecting unknown keys."""
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise ConfigError(f"Config key '{key_path}' must be a mapping.")
    hints = get_type_hints(cls)
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"Unknown config key '{key_path}.{unknown[0]}'.")
    kwargs = {}
    for name, value in values.items():
        hint = hints[name]
        if is_dataclass(hint):
            kwargs[name] = _build(hint, value, f"{key_path}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid config section '{key_path}': {exc}") from exc


def _set_dotted(document: dict, dotted_key: str, value: Any) -> None:
    keys = dotted_key.split(".")
    node = document
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"Config key '{dotted_key}' does not name a section.")
    node[keys[-1]] = value


def build_run_config(document: dict, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Validates a config document, applies dotted-key overrides and returns the resolved run config.

    Precedence is override (command line flag) over document over dataclass default. The
    run seed and worker count fill the sections that do not set their own.

    Raises:
        ConfigError: If a key is unknown or a value invalid.
    """
    document = _merge({}, document)
    for dotted_key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(document, dotted_key, value)
    unknown = sorted(set(document) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(f"Unknown config key '{unknown[0]}'.")
    seed = document.get("seed", 0)
    workers = document.get("workers", 0)
    probe = dict(document.get("probe") or {})
    split = dict(probe.pop("split", None) or {})
    sections = {"train": dict(document.get("train") or {}), "probe": probe, "split": split}
    for key in ("augment", "contrastive_augment"):
        if key in sections["train"]:
            raise ConfigError(f"Config key 'train.{key}' belongs at the top level as '{key}'.")
    for name in SEEDED_SECTIONS:
        sections[name].setdefault("seed", seed)
    sections["train"].setdefault("workers", workers)
    augment = _build(AugmentConfig, document.get("augment"), "augment")
    contrastive_augment = _build(ContrastiveAugmentConfig, document.get("contrastive_augment"), "contrastive_augment")
    train = _build(TrainConfig, sections["train"], "train")
    synth = document.get("synth") or {}
    for world in ("episodic", "shapes"):
        synth = _merge(synth, {world: {"seed": (synth.get(world) or {}).get("seed", seed)}})
    return RunConfig(
        data=_build(DataConfig, document.get("data"), "data"),
        augment=augment,
        contrastive_augment=contrastive_augment,
        train=dataclasses.replace(train, augment=augment, contrastive_augment=contrastive_augment),
        probe=_build(ProbeConfig, sections["probe"], "probe"),
        split=_build(SplitSpec, sections["split"], "probe.split"),
        analysis=_build(AnalysisConfig, document.get("analysis"), "analysis"),
        synth=_build(SynthConfig, synth, "synth"),
        output_dir=str(document.get("output_dir", "output")),
        seed=seed,
        workers=workers,
    )


def load_run_config(path_file: Optional[Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    document = read_config_file(path_file) if path_file is not None else {}
    run_config = build_run_config(document, overrides)
    if path_file is not None:
        logger.info(f"Config file '{path_file}' loaded.")
    return run_config


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, Path):
        return str(value)
    return value


def resolved_document(run_config: RunConfig) -> dict:
    """The run config as a plain document that `build_run_config` turns back into the same config."""
    document = _plain(dataclasses.asdict(run_config))
    document["train"].pop("augment")
    document["train"].pop("contrastive_augment")
    document["probe"]["split"] = document.pop("split")
    return document


def write_resolved_config(run_config: RunConfig, dir_output: Path) -> Path:
    dir_output.mkdir(parents=True, exist_ok=True)
    path_file = dir_output / "resolved_config.yml"
    with open(path_file, "w", encoding="utf-8") as file:
        yaml.safe_dump(resolved_document(run_config), file, sort_keys=False)
    logger.info(f"Resolved config written to '{path_file}'.")
    return path_file
