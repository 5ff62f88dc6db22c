"""Bundled example data: the eight-node reference CEG and the synthetic corpus config."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .configfile import parse_config, coerce_fields
from .ingest import parse_ceg_file
from .synth import SynthConfig, generate


def data_path(name: str) -> Path:
    return Path(str(resources.files("causallp").joinpath("data", name)))


def reference_path() -> Path:
    return data_path("reference.jsonl")


def load_reference():
    return parse_ceg_file(reference_path())


def synthetic_config(**overrides) -> SynthConfig:
    raw = parse_config(data_path("synthetic.conf").read_text(encoding="utf-8"))
    values = coerce_fields(SynthConfig, raw)
    values.update(overrides)
    return SynthConfig(**values)


def synthetic_corpus(**overrides):
    return generate(synthetic_config(**overrides))
