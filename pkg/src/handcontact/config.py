"""Experiment configuration stored as an INI file.

Sections: ``[experiment]`` (mode, seed), ``[paths]``, ``[pseudolabel]``,
``[model]``, ``[train]`` and ``[gplc]``.  Missing keys take the defaults of
the matching dataclass.  Every problem found is reported in one error.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import MISSING, asdict, dataclass, field, fields

from .gplc import GplcConfig
from .motionlabel import PseudoLabelConfig
from .seqmodel import TrainConfig

MODES = ("supervised", "noisy_only", "joint", "plc", "gplc", "pseudo_labeling")
PATH_KEYS = ("noisy", "trusted", "val", "test")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ModelSection:
    encoder_size: int = 64
    hidden_size: int = 64
    n_layers: int = 2
    head_sizes: tuple = (64, 32)

    def problems(self):
        out = []
        for name in ("encoder_size", "hidden_size", "n_layers"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if not self.head_sizes or min(self.head_sizes) < 1:
            out.append("head_sizes must be a non-empty list of positive ints")
        return out


@dataclass
class ExperimentConfig:
    mode: str = "gplc"
    seed: int = 0
    paths: dict = field(default_factory=dict)
    pseudolabel: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    gplc: GplcConfig = field(default_factory=GplcConfig)

    def to_dict(self):
        return {
            "experiment": {"mode": self.mode, "seed": self.seed},
            "paths": dict(self.paths),
            "pseudolabel": asdict(self.pseudolabel),
            "model": asdict(self.model),
            # the training seed follows [experiment] seed
            "train": {k: v for k, v in asdict(self.train).items() if k != "seed"},
            "gplc": asdict(self.gplc),
        }

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, values in self.to_dict().items():
            cp[section] = {k: _format(v) for k, v in values.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _format(v):
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(p) for p in raw.replace(",", " ").split())
    return raw.strip()


def _default(f):
    if f.default is not MISSING:
        return f.default
    return f.default_factory()


def _section(cls, values: dict, name: str, problems: list, skip=()):
    kwargs = {}
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    for key, raw in values.items():
        if key not in known:
            problems.append(f"[{name}] unknown key {key!r}")
            continue
        try:
            kwargs[key] = _coerce(raw, _default(known[key]))
        except ValueError as exc:
            problems.append(f"[{name}] {key}: {exc}")
    try:
        obj = cls(**kwargs)
    except ValueError as exc:
        problems.extend(f"[{name}] {msg}" for msg in str(exc).split("; "))
        return cls()
    if hasattr(obj, "problems") and not hasattr(cls, "__post_init__"):
        problems.extend(f"[{name}] {msg}" for msg in obj.problems())
    return obj


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unparseable config: {exc}"]) from None
    problems = []
    allowed = {"experiment", "paths", "pseudolabel", "model", "train", "gplc"}
    for s in cp.sections():
        if s not in allowed:
            problems.append(f"unknown section [{s}]")

    exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    mode = exp.pop("mode", "gplc").strip()
    if mode not in MODES:
        problems.append(f"[experiment] mode must be one of {', '.join(MODES)}")
    try:
        seed = int(exp.pop("seed", "0"))
    except ValueError:
        problems.append("[experiment] seed must be an integer")
        seed = 0
    for key in exp:
        problems.append(f"[experiment] unknown key {key!r}")

    paths = dict(cp["paths"]) if cp.has_section("paths") else {}
    for key in paths:
        if key not in PATH_KEYS:
            problems.append(f"[paths] unknown key {key!r}")

    def sect(name):
        return dict(cp[name]) if cp.has_section(name) else {}

    cfg = ExperimentConfig(
        mode=mode,
        seed=seed,
        paths=paths,
        pseudolabel=_section(PseudoLabelConfig, sect("pseudolabel"), "pseudolabel", problems),
        model=_section(ModelSection, sect("model"), "model", problems),
        train=_section(TrainConfig, sect("train"), "train", problems, skip=("seed",)),
        gplc=_section(GplcConfig, sect("gplc"), "gplc", problems),
    )
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    return parse_config(text)


def required_paths(mode: str) -> tuple:
    if mode == "supervised":
        return ("trusted",)
    if mode == "noisy_only":
        return ("noisy",)
    return ("noisy", "trusted")
