"""Run configuration: INI-style ``key = value`` text with sections.

Unknown sections or keys are rejected.  Every artifact records
:func:`config_hash` of the normalized configuration so that outputs from
different runs cannot be mixed silently.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, fields

from .errors import InvalidInputError
from .hilbert import HilbertCurve
from .synth import CanvasConfig, SynthConfig
from .train import TrainConfig

TASKS = ("synthetic-1d", "hilbert-2d")

# section -> key -> (type, default)
SCHEMA = {
    "run": {
        "task": (str, "synthetic-1d"),
        "seed": (int, 0),
        "n_train": (int, 2000),
        "n_test": (int, 200),
        "checkpoint_every": (int, 5),
    },
    "data": {
        "T_min": (int, 200),
        "T_max": (int, 400),
        "channels": (int, 2),
        "feature_dim": (int, 8),
        "event_rate": (float, 0.01),
        "min_separation": (int, 5),
        "pulse_width": (float, 3.0),
        "amplitude": (float, 1.0),
        "noise_std": (float, 0.2),
        "distractor_rate": (float, 0.0),
    },
    "canvas": {
        "width": (int, 64),
        "height": (int, 64),
        "classes": (int, 2),
        "min_glyphs": (int, 1),
        "max_glyphs": (int, 3),
        "glyph_size": (int, 5),
        "noise_std": (float, 0.0),
        "window": (int, 8),
        "idx_images": (str, ""),
        "idx_labels": (str, ""),
        "digits": (str, "0,1"),
    },
    "model": {
        "hidden": (int, 24),
    },
    "train": {
        "lr": (float, 3e-3),
        "beta1": (float, 0.9),
        "beta2": (float, 0.999),
        "eps_adam": (float, 1e-8),
        "batch_size": (int, 32),
        "epochs": (int, 20),
        "k_max": (int, 31),
        "omega": (float, 0.5),
        "eps_p": (float, 1e-6),
        "clip_norm": (float, 5.0),
    },
    "eval": {
        "tolerance": (int, 2),
        "threshold": (float, 0.5),
        "min_separation": (int, 0),
    },
}

DATA_SECTIONS = {"synthetic-1d": ("data",), "hilbert-2d": ("canvas",)}
DATA_RUN_KEYS = ("task", "seed", "n_train", "n_test")


class ConfigError(InvalidInputError):
    pass


@dataclass
class RunConfig:
    values: dict  # section -> key -> typed value

    def __getitem__(self, section):
        return self.values[section]

    @property
    def task(self) -> str:
        return self.values["run"]["task"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def as_dict(self) -> dict:
        return {s: dict(kv) for s, kv in self.values.items()}

    def with_overrides(self, **run_overrides) -> "RunConfig":
        values = self.as_dict()
        for k, v in run_overrides.items():
            if v is not None:
                values["run"][k] = v
        return RunConfig(values)

    def hash(self) -> str:
        return config_hash(self.as_dict())

    def data_hash(self) -> str:
        """Hash of the settings that determine the generated dataset only."""
        sub = {"run": {k: self.values["run"][k] for k in DATA_RUN_KEYS}}
        for s in DATA_SECTIONS[self.task]:
            sub[s] = self.values[s]
        return config_hash(sub)

    def synth_config(self) -> SynthConfig:
        d = self.values["data"]
        return SynthConfig(
            T_min=d["T_min"], T_max=d["T_max"], channels=d["channels"], feature_dim=d["feature_dim"],
            event_rate=d["event_rate"], min_separation=d["min_separation"], pulse_width=d["pulse_width"],
            amplitude=d["amplitude"], noise_std=d["noise_std"], distractor_rate=d["distractor_rate"],
        )

    def canvas_config(self) -> CanvasConfig:
        c = self.values["canvas"]
        return CanvasConfig(
            width=c["width"], height=c["height"], classes=c["classes"], min_glyphs=c["min_glyphs"],
            max_glyphs=c["max_glyphs"], glyph_size=c["glyph_size"], noise_std=c["noise_std"],
            center_cell=c["window"],
        )

    def curve(self) -> HilbertCurve:
        c = self.values["canvas"]
        side = max(c["width"], c["height"]) / c["window"]
        order = max(0, int(side - 1).bit_length())
        return HilbertCurve(order, c["window"], c["window"])

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        names = {f.name for f in fields(TrainConfig)}
        kw = {k: v for k, v in t.items() if k in names}
        return TrainConfig(hidden=self.values["model"]["hidden"], seed=self.seed, **kw)

    def eval_min_separation(self) -> int:
        sep = self.values["eval"]["min_separation"]
        if sep > 0:
            return sep
        return self.values["data"]["min_separation"] if self.task == "synthetic-1d" else 1


def config_hash(values: dict) -> str:
    blob = json.dumps(values, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _convert(section, key, typ, raw):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str  # keys are case-sensitive (T_min)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key '{key}' in section [{section}]")
            values[section][key] = _convert(section, key, SCHEMA[section][key][0], raw)
    cfg = RunConfig(values)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate(cfg: RunConfig):
    if cfg.task not in TASKS:
        raise ConfigError(f"[run] task must be one of {', '.join(TASKS)}, got {cfg.task!r}")
    r = cfg["run"]
    if r["n_train"] < 1 or r["n_test"] < 1:
        raise ConfigError("[run] n_train and n_test must be positive")
    t = cfg["train"]
    if t["epochs"] < 0 or t["batch_size"] < 1 or t["k_max"] < 1:
        raise ConfigError("[train] epochs >= 0, batch_size >= 1 and k_max >= 1 required")
    if not 0.0 < t["omega"] < 1.0:
        raise ConfigError("[train] omega must lie in (0, 1)")
    try:
        if cfg.task == "synthetic-1d":
            cfg.synth_config()
        else:
            cfg.canvas_config()
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None


def default_config_text(task: str = "synthetic-1d") -> str:
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, default) in keys.items():
            if section == "run" and key == "task":
                default = task
            lines.append(f"{key} = {default}")
        lines.append("")
    return "\n".join(lines)
