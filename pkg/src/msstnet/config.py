"""Flat ``key = value`` run configuration.

Keys are the field names of :class:`ModelConfig` and :class:`TrainSchedule`,
plus ``backbone.*`` keys for the CNN layout and ``preset`` to choose the base
setting (``desk``, ``tiny`` or ``full``). Lines starting with ``#`` are
comments. Unknown keys and malformed values are errors.

Example::

    preset = desk
    T = 4
    L = 1
    stage_enabled = all
    backbone.channels = 16,32
    backbone.target_grids = 8x8,4x4
    epochs = 40
    decay_epochs = 20,35
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, replace
from typing import Callable

from .backbone import BackboneConfig, StageSpec
from .model import ModelConfig, desk_config, tiny_config
from .training import TrainSchedule

PRESETS: dict[str, Callable[[], ModelConfig]] = {
    "desk": desk_config,
    "tiny": tiny_config,
    "full": ModelConfig,
}
# the desk model trains on the default schedule only with gradient-norm clipping
PRESET_SCHEDULES: dict[str, TrainSchedule] = {
    "desk": TrainSchedule(clip_norm=1.0),
    "tiny": TrainSchedule(),
    "full": TrainSchedule(),
}


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _int_or_ints(s: str):
    v = _ints(s)
    return v[0] if len(v) == 1 and "," not in s else v


def _bools(s: str) -> tuple[bool, ...] | None:
    if s.strip().lower() == "all":
        return None
    return tuple(_bool(v) for v in s.split(",") if v.strip())


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else int(s)


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _grids(s: str) -> tuple[tuple[int, int], ...]:
    out = []
    for g in s.split(","):
        h, _, w = g.strip().lower().partition("x")
        out.append((int(h), int(w or h)))
    return tuple(out)


def _pair(s: str) -> tuple[int, int]:
    v = _ints(s.replace("x", ","))
    return (v[0], v[0]) if len(v) == 1 else (v[0], v[1])


MODEL_KEYS: dict[str, Callable[[str], object]] = {
    "T": int, "S": int, "N": int, "D": int, "A": int, "L": _int_or_ints, "C": int,
    "D_mlp": _opt_int, "stage_enabled": _bools, "seed": int, "tie_pos": _bool,
    "pos_per_scale": _bool, "pos_std": float, "final_norm": _bool,
}  # fmt: skip
SCHEDULE_KEYS: dict[str, Callable[[str], object]] = {
    "epochs": int, "base_lr": float, "decay_epochs": _ints, "decay_factor": float,
    "batch_size": int, "momentum": float, "weight_decay": float, "clip_norm": _opt_float,
}  # fmt: skip
BACKBONE_KEYS: dict[str, Callable[[str], object]] = {
    "backbone.channels": _ints, "backbone.strides": _ints, "backbone.kernels": _ints,
    "backbone.depths": _ints, "backbone.input_size": _pair, "backbone.target_grids": _grids,
    "backbone.in_channels": int, "backbone.taps": _ints,
}  # fmt: skip


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    schedule: TrainSchedule
    preset: str = "desk"

    def validate(self) -> None:
        self.model.validate()
        self.schedule.validate()


def _backbone_from(base: BackboneConfig, vals: dict[str, object]) -> BackboneConfig:
    if not vals:
        return base
    st = base.stages
    chans = vals.get("backbone.channels", tuple(s.out_channels for s in st))
    n = len(chans)

    def per_stage(key, default):
        v = vals.get(key)
        if v is None:
            cur = tuple(getattr(s, default) for s in st)
            return cur if len(cur) == n else (getattr(StageSpec(1), default),) * n
        if len(v) != n:
            raise ConfigError(f"{key} needs {n} values, got {len(v)}")
        return v

    strides, kernels, depths = per_stage("backbone.strides", "stride"), per_stage("backbone.kernels", "kernel"), per_stage("backbone.depths", "depth")
    stages = tuple(StageSpec(c, s, k, d) for c, s, k, d in zip(chans, strides, kernels, depths))
    return BackboneConfig(
        stages=stages,
        input_size=vals.get("backbone.input_size", base.input_size),
        target_grids=vals.get("backbone.target_grids", base.target_grids),
        in_channels=vals.get("backbone.in_channels", base.in_channels),
        taps=vals.get("backbone.taps", base.taps),
    )


def parse_config(text: str, preset: str | None = None) -> RunConfig:
    """Parse ``key = value`` lines on top of a preset; rejects unknown keys."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    name = raw.pop("preset", preset or "desk")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    unknown = set(raw) - set(MODEL_KEYS) - set(SCHEDULE_KEYS) - set(BACKBONE_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    parsed: dict[str, object] = {}
    for key, value in raw.items():
        conv = MODEL_KEYS.get(key) or SCHEDULE_KEYS.get(key) or BACKBONE_KEYS[key]
        try:
            parsed[key] = conv(value)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    base = PRESETS[name]()
    model = replace(
        base,
        backbone=_backbone_from(base.backbone, {k: v for k, v in parsed.items() if k in BACKBONE_KEYS}),
        **{k: v for k, v in parsed.items() if k in MODEL_KEYS},
    )
    sched = replace(PRESET_SCHEDULES[name], **{k: v for k, v in parsed.items() if k in SCHEDULE_KEYS})
    cfg = RunConfig(model, sched, name)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path: str | os.PathLike | None, preset: str | None = None) -> RunConfig:
    if path is None:
        return parse_config("", preset)
    with open(path) as fh:
        return parse_config(fh.read(), preset)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ",".join(f"{a}x{b}" for a, b in v)
        return ",".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def format_config(cfg: RunConfig) -> str:
    """Every effective setting as ``key = value`` lines; parses back to ``cfg``."""
    m, bb = cfg.model, cfg.model.backbone
    lines = [f"preset = {cfg.preset}"]
    for key in MODEL_KEYS:
        v = getattr(m, key)
        if key == "stage_enabled" and v is None:
            v = "all"
        lines.append(f"{key} = {_fmt(v)}" + ("," if key == "L" and isinstance(v, tuple) and len(v) == 1 else ""))
    lines += [
        f"backbone.channels = {_fmt(tuple(s.out_channels for s in bb.stages))}",
        f"backbone.strides = {_fmt(tuple(s.stride for s in bb.stages))}",
        f"backbone.kernels = {_fmt(tuple(s.kernel for s in bb.stages))}",
        f"backbone.depths = {_fmt(tuple(s.depth for s in bb.stages))}",
        f"backbone.input_size = {bb.input_size[0]}x{bb.input_size[1]}",
        f"backbone.target_grids = {_fmt(bb.target_grids)}",
        f"backbone.in_channels = {bb.in_channels}",
    ]
    if bb.taps is not None:
        lines.append(f"backbone.taps = {_fmt(bb.taps)}")
    for f in dataclasses.fields(TrainSchedule):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.schedule, f.name))}")
    return "\n".join(lines)
