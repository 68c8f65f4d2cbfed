"""Sectioned ``key = value`` run configuration.

Sections ``[run]``, ``[paths]``, ``[train]``, ``[walk]``, ``[online]`` and
``[synth]``; unknown keys are rejected. Command-line flags override values
read from the file.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .online import OnlineConfig
from .synth import SynthConfig
from .trainer import TrainConfig
from .walks import WalkConfig

__all__ = ["RunConfig"]

PATH_KEYS = ("nodes", "edges", "content", "schema", "words", "model", "output", "delta", "events")

_SECTIONS = {
    "train": TrainConfig,
    "walk": WalkConfig,
    "online": OnlineConfig,
    "synth": SynthConfig,
}
_SHARED = {"seed", "workers"}


def _coerce(cls, key, raw):
    hints = {f.name: f.type for f in dataclasses.fields(cls)}
    if key not in hints or key in _SHARED:
        raise ConfigError(f"unknown key {key!r} for section [{_section_of(cls)}]")
    ann = str(hints[key])
    text = raw.strip()
    if "None" in ann and text.lower() in ("", "none"):
        return None
    try:
        if ann.startswith("int"):
            return int(text)
        if ann.startswith("float"):
            return float(text)
        if ann.startswith("bool"):
            return text.lower() in ("1", "true", "yes", "on")
        if ann.startswith("tuple"):
            return tuple(s.strip() for s in text.split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"[{_section_of(cls)}] {key} = {raw!r} is not a valid {ann}") from None
    return text


def _section_of(cls):
    return next(k for k, v in _SECTIONS.items() if v is cls)


def _format(value):
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    paths: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    walk: dict = field(default_factory=dict)
    online: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)

    @classmethod
    def read(cls, path):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_parser(parser)

    @classmethod
    def from_string(cls, text):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser):
        out = cls()
        for section in parser.sections():
            items = dict(parser.items(section))
            if section == "run":
                for key, raw in items.items():
                    if key not in _SHARED:
                        raise ConfigError(f"unknown key {key!r} for section [run]")
                    try:
                        setattr(out, key, int(raw))
                    except ValueError:
                        raise ConfigError(f"[run] {key} must be an integer") from None
            elif section == "paths":
                for key in items:
                    if key not in PATH_KEYS:
                        raise ConfigError(f"unknown key {key!r} for section [paths]")
                out.paths = items
            elif section in _SECTIONS:
                cfg_cls = _SECTIONS[section]
                setattr(out, section, {k: _coerce(cfg_cls, k, v) for k, v in items.items()})
            else:
                raise ConfigError(f"unknown config section [{section}]")
        return out

    def to_string(self):
        parser = configparser.ConfigParser(interpolation=None)
        parser["run"] = {"seed": str(self.seed), "workers": str(self.workers)}
        if self.paths:
            parser["paths"] = dict(self.paths)
        for section in _SECTIONS:
            values = getattr(self, section)
            if values:
                parser[section] = {k: _format(v) for k, v in values.items() if v is not None}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())

    def override(self, section, **values):
        """Set non-``None`` ``values`` in ``section``; flags win over file values."""
        target = getattr(self, section)
        for k, v in values.items():
            if v is not None:
                target[k] = v
        return self

    def path(self, key, required=False):
        value = self.paths.get(key)
        if required and not value:
            raise ConfigError(f"missing required path {key!r}")
        return value

    def train_config(self):
        return self._build(TrainConfig, self.train, seed=self.seed)

    def walk_config(self):
        return self._build(WalkConfig, self.walk, seed=self.seed, workers=self.workers)

    def online_config(self):
        return self._build(OnlineConfig, self.online, seed=self.seed)

    def synth_config(self):
        return self._build(SynthConfig, self.synth, seed=self.seed)

    @staticmethod
    def _build(cls, values, **shared):
        try:
            return cls(**{**values, **shared})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
