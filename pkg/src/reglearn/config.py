"""Run configuration: an INI document with typed, validated keys.

Every command reads the same schema. Values come from three layers, with
later layers winning: built-in defaults, an optional config file, and
command-line flags. The merged (effective) configuration is written next to
every output so that a run can be repeated from it alone.

Sections and keys::

    [data]       path, target, missing_policy, fractions, split_seed
    [arch]       hidden, activation
    [train]      mode, eta, nu, theta, epochs, batch_size, norm,
                 weight_update, seed, sparsity_epsilon, track_edges
    [synth]      samples, features, informative, decay,
                 interaction_pairs, noise_r2, seed
    [grid]       eta, nu, theta, batch_size, epochs, hidden, norm, activation
    [grid.MODE]  any [grid] key, overriding it for one mode
    [benchmark]  modes, seeds, master_seed, fractions, instances, epsilon
    [output]     dir

Lists are comma separated. Hidden-layer widths are joined with ``-``
(``50-10``; empty for no hidden layer) and alternative architectures in a
grid are separated by ``;``.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .data import SynthConfig
from .errors import ConfigurationError
from .experiment import Grid
from .trainer import MODES, TrainConfig


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _split(s: str, sep: str = ",") -> list[str]:
    return [p.strip() for p in s.split(sep) if p.strip()]


def _hidden(s: str) -> tuple[int, ...]:
    s = s.strip()
    return tuple(_int(p) for p in s.split("-")) if s else ()


def _hiddens(s: str) -> tuple[tuple[int, ...], ...]:
    parts = [p.strip() for p in s.split(";")]
    return tuple(_hidden(p) for p in parts)


# parser, formatter pairs; the formatter yields the canonical text stored in the effective config
_TYPES = {
    "str": (str.strip, str),
    "int": (_int, str),
    "float": (_float, repr),
    "ints": (lambda s: tuple(_int(p) for p in _split(s)), lambda v: ", ".join(map(str, v))),
    "floats": (lambda s: tuple(_float(p) for p in _split(s)), lambda v: ", ".join(map(repr, v))),
    "strs": (lambda s: tuple(_split(s)), lambda v: ", ".join(v)),
    "hidden": (_hidden, lambda v: "-".join(map(str, v))),
    "hiddens": (_hiddens, lambda v: "; ".join("-".join(map(str, h)) for h in v)),
}

_GRID_KEYS = {
    "eta": ("floats", "0.001, 0.01"),
    "nu": ("floats", "1000.0, 10000.0, 100000.0"),
    "theta": ("floats", "-8.0, -6.0, -4.0"),
    "batch_size": ("ints", "32"),
    "epochs": ("ints", "100"),
    "hidden": ("hiddens", "50-10"),
    "norm": ("strs", "l1"),
    "activation": ("str", "relu"),
}

SCHEMA: dict[str, dict[str, tuple[str, str]]] = {
    "data": {
        "path": ("str", ""),
        "target": ("str", "y"),
        "missing_policy": ("str", "reject_row"),
        "fractions": ("floats", "0.8, 0.1, 0.1"),
        "split_seed": ("int", "0"),
    },
    "arch": {
        "hidden": ("hidden", "50-10"),
        "activation": ("str", "relu"),
    },
    "train": {
        "mode": ("str", "rln"),
        "eta": ("float", "0.01"),
        "nu": ("float", "10000.0"),
        "theta": ("float", "-6.0"),
        "epochs": ("int", "100"),
        "batch_size": ("int", "32"),
        "norm": ("str", "l1"),
        "weight_update": ("str", "auto"),
        "seed": ("int", "0"),
        "sparsity_epsilon": ("float", "0.0"),
        "track_edges": ("int", "20"),
    },
    "synth": {
        "samples": ("int", "1000"),
        "features": ("int", "200"),
        "informative": ("int", "10"),
        "decay": ("float", "0.5"),
        "interaction_pairs": ("int", "0"),
        "noise_r2": ("float", "0.3"),
        "seed": ("int", "0"),
    },
    "grid": _GRID_KEYS,
    "benchmark": {
        "modes": ("strs", "rln, dnn_uniform, linear"),
        "seeds": ("int", "10"),
        "master_seed": ("int", "0"),
        "fractions": ("floats", "0.6, 0.2, 0.2"),
        "instances": ("int", "10"),
        "epsilon": ("float", "0.0"),
    },
    "output": {
        "dir": ("str", ""),
    },
}


def _schema_for(section: str) -> dict[str, tuple[str, str]]:
    if section in SCHEMA:
        return SCHEMA[section]
    if section.startswith("grid."):
        mode = section[len("grid."):]
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode in section [{section}]")
        return _GRID_KEYS
    raise ConfigurationError(f"unknown config section [{section}]")


def _parse(section: str, key: str, text) -> object:
    schema = _schema_for(section)
    if key not in schema:
        raise ConfigurationError(f"unknown config key {key!r} in [{section}]")
    parse, _ = _TYPES[schema[key][0]]
    try:
        return parse(str(text))
    except ValueError as exc:
        raise ConfigurationError(f"[{section}] {key}: {exc}") from None


def _format(section: str, key: str, value) -> str:
    _, fmt = _TYPES[_schema_for(section)[key][0]]
    return fmt(value)


@dataclass
class RunConfig:
    values: dict[str, dict[str, object]] = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls({s: {k: _parse(s, k, d) for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    @classmethod
    def load(cls, path=None, overrides: dict[tuple[str, str], object] | None = None) -> "RunConfig":
        """Defaults, then the file at ``path`` (if any), then ``overrides``."""
        cfg = cls.defaults()
        if path is not None:
            cfg.update_from_file(path)
        for (section, key), value in (overrides or {}).items():
            if value is not None:
                cfg.set(section, key, value)
        return cfg

    def update_from_file(self, path) -> None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"no such config file: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from None
        for section in parser.sections():
            for key, text in parser.items(section):
                self.set(section, key, text)

    def set(self, section: str, key: str, value) -> None:
        if isinstance(value, str):
            parsed = _parse(section, key, value)
        else:
            # typed values pass through the canonical text so that both routes agree
            if key not in _schema_for(section):
                raise ConfigurationError(f"unknown config key {key!r} in [{section}]")
            parsed = _parse(section, key, _format(section, key, value))
        self.values.setdefault(section, {})[key] = parsed

    def get(self, section: str, key: str):
        if section in self.values and key in self.values[section]:
            return self.values[section][key]
        raise ConfigurationError(f"[{section}] {key} is not set")

    def to_ini(self) -> str:
        lines = []
        for section in sorted(self.values, key=_section_order):
            lines.append(f"[{section}]")
            for key in sorted(self.values[section]):
                lines.append(f"{key} = {_format(section, key, self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self, sections=None) -> str:
        """Short content hash of the given sections (all by default)."""
        keep = self.values
        if sections is not None:
            keep = {s: v for s, v in self.values.items() if s.split(".")[0] in sections}
        text = RunConfig(keep).to_ini()
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_ini(), encoding="utf-8")
        return path

    # typed views

    def train_config(self) -> TrainConfig:
        t = self.values["train"]
        wu = t["weight_update"]
        return TrainConfig(
            eta=t["eta"], nu=t["nu"], theta=t["theta"], epochs=t["epochs"], batch_size=t["batch_size"],
            norm=t["norm"], mode=t["mode"], weight_update=None if wu == "auto" else wu,
            seed=t["seed"], sparsity_epsilon=t["sparsity_epsilon"],
        )

    def synth_config(self) -> SynthConfig:
        s = self.values["synth"]
        return SynthConfig(
            n_samples=s["samples"], n_features=s["features"], n_informative=s["informative"],
            decay=s["decay"], interaction_pairs=s["interaction_pairs"], noise_r2=s["noise_r2"], seed=s["seed"],
        )

    def grid(self, mode: str | None = None) -> Grid:
        g = dict(self.values["grid"])
        if mode is not None:
            g.update(self.values.get(f"grid.{mode}", {}))
        return Grid(**g)

    def grids(self) -> dict[str, Grid]:
        modes = self.values["benchmark"]["modes"]
        if not modes:
            raise ConfigurationError("[benchmark] modes is empty")
        for m in modes:
            if m not in MODES:
                raise ConfigurationError(f"unknown mode {m!r} in [benchmark] modes")
        return {m: self.grid(m) for m in modes}


def _section_order(name: str):
    base = name.split(".")[0]
    order = list(SCHEMA)
    return (order.index(base) if base in order else len(order), name)
