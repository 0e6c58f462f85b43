"""Flat key=value run configuration with per-task defaults.

The config file format is one `key = value` pair per line, '#' comments,
no nesting. Unknown keys are rejected. Fields left unset fall back to the
task's default column (delta_z, history/prediction/apply lengths, batch
size, hidden sizes) or to the shared defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError

# per-task defaults: delta_z, history H, prediction L, applied p, batch, hidden
TASK_DEFAULTS = {
    "bp": {"delta_z": 0.3, "history_len": 0, "chunk_len": 1, "apply_len": 1,
           "batch_size": 1024, "hidden": (256, 256, 256)},
    "do": {"delta_z": 0.3, "history_len": 2, "chunk_len": 8, "apply_len": 8,
           "batch_size": 32, "hidden": (256, 512, 1024)},
    "op": {"delta_z": 0.3, "history_len": 0, "chunk_len": 8, "apply_len": 8,
           "batch_size": 64, "hidden": (256, 512, 1024)},
    "om": {"delta_z": 0.5, "history_len": 2, "chunk_len": 8, "apply_len": 4,
           "batch_size": 64, "hidden": (256, 512, 1024)},
    "bt": {"delta_z": 0.3, "history_len": 2, "chunk_len": 8, "apply_len": 4,
           "batch_size": 64, "hidden": (256, 512, 1024)},
}


@dataclass
class RunConfig:
    task: str = "bp"
    policy: str = "ccdp"
    seed: int = 0
    episodes: int = 100
    m_demos: int = 500
    out_dir: str = "runs"

    # training
    batch_size: int | None = None          # per-task default
    epochs: int = 100
    lr: float = 1e-3
    hidden: tuple[int, ...] | None = None  # per-task default
    lr_decay_at: float = 0.8
    lr_decay: float = 0.1
    embed_dim: int = 16
    z_epochs: int | None = None            # defaults to epochs
    z_batch_size: int = 256

    # diffusion
    k_steps: int = 100
    schedule_s: float = 0.008
    schedule: str = "cosine"
    chain_clip: float = 3.0
    noiseless_tail: int = 0

    # rollout (per-task defaults)
    history_len: int | None = None
    chunk_len: int | None = None
    apply_len: int | None = None

    # recovery synthesis
    delta_z: float | None = None           # per-task default
    delta_x: float = 0.25
    sigma_x: float = 0.05
    w_s_synth: float = 0.7
    n_states: int = 48
    n_actions_per_state: int = 24
    train_pair_cap: int = 150_000

    # composition weights
    w_s: float = 1.0
    w_h_normal: float = 1.0
    w_h_failed: float = 0.2
    w_z: float = 1.0
    recency: int = 2
    feature_dedup: bool = True

    # reporting
    timings: bool = False

    def resolved(self) -> "RunConfig":
        """Fill per-task defaults for unset fields."""
        if self.task not in TASK_DEFAULTS:
            raise ConfigError(f"unknown task {self.task!r}")
        out = RunConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        for key, val in TASK_DEFAULTS[self.task].items():
            if getattr(out, key) is None:
                setattr(out, key, val)
        if out.z_epochs is None:
            out.z_epochs = out.epochs
        if out.schedule != "cosine":
            raise ConfigError(f"unknown schedule {out.schedule!r}")
        if out.policy not in ("ccdp", "dp", "dpstar"):
            raise ConfigError(f"unknown policy {out.policy!r}")
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    ftype = _FIELD_TYPES[key]
    if ftype in ("int", "int | None"):
        return int(raw)
    if ftype in ("float", "float | None"):
        return float(raw)
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if ftype == "tuple[int, ...] | None":
        return tuple(int(v) for v in raw.split(",") if v.strip())
    return raw


def parse_config_text(text: str) -> dict:
    """Parse key = value lines; rejects unknown keys and bad syntax."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _parse_value(key, raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return out


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        with open(path) as f:
            values.update(parse_config_text(f.read()))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val
    return RunConfig(**values).resolved()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # 17 significant digits, round-trip exact
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def config_dict(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}
