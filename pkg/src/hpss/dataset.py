"""Labeled validation data for live fitness evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .errors import ConfigError, StructuralError
from .metrics import PREFERENCE_LABELS

GRAINS = ("dataset", "sample")
MODES = ("pointwise", "pairwise")


@dataclass(frozen=True)
class RatingSample:
    id: str
    fields: Mapping[str, str]
    human: float
    group: str | None = None
    native_scale: tuple[float, float] | None = None


@dataclass
class Dataset:
    id: str
    aspect: str
    criteria: str
    task_family: str
    samples: list[RatingSample]
    grain: str = "dataset"
    mode: str = "pointwise"
    baseline_scale: str | None = None
    _by_id: dict = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.grain not in GRAINS:
            raise ConfigError(f"grain must be one of {GRAINS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise StructuralError("duplicate sample ids")
        if self.grain == "sample" and any(s.group is None for s in self.samples):
            raise StructuralError("sample-level grain needs a group key on every sample")
        if self.mode == "pointwise" and any(s.native_scale is None for s in self.samples):
            raise StructuralError("pointwise samples need a native_scale")
        self._by_id = {s.id: s for s in self.samples}

    def __len__(self):
        return len(self.samples)

    def get(self, sample_id: str) -> RatingSample:
        try:
            return self._by_id[sample_id]
        except KeyError:
            raise StructuralError(f"no sample {sample_id!r}") from None


def parse_sample(rec: Mapping, mode: str = "pointwise") -> RatingSample:
    try:
        human = rec["human"]
        if mode == "pairwise" and isinstance(human, str):
            human = PREFERENCE_LABELS[human.strip().upper()]
        scale = rec.get("native_scale")
        return RatingSample(
            id=str(rec["id"]),
            fields={str(k): str(v) for k, v in rec["fields"].items()},
            human=float(human),
            group=None if rec.get("group") is None else str(rec["group"]),
            native_scale=None if scale is None else (float(scale[0]), float(scale[1])),
        )
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise StructuralError(f"malformed sample record: {e!r}") from None


def read_samples(path: str | Path, mode: str = "pointwise") -> list[RatingSample]:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise StructuralError(f"{path}:{lineno}: {e}") from None
            samples.append(parse_sample(rec, mode))
    return samples


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset descriptor (YAML) whose ``samples`` key points at a JSONL file."""
    path = Path(path)
    meta = yaml.safe_load(path.read_text())
    try:
        mode = meta.get("mode", "pointwise")
        samples = read_samples(path.parent / meta["samples"], mode)
        return Dataset(
            id=str(meta["id"]),
            aspect=str(meta["aspect"]),
            criteria=str(meta.get("criteria", "")),
            task_family=str(meta["task_family"]),
            grain=str(meta["grain"]),
            mode=mode,
            samples=samples,
            baseline_scale=None if meta.get("baseline_scale") is None else str(meta["baseline_scale"]),
        )
    except KeyError as e:
        raise ConfigError(f"dataset descriptor {path} lacks required key {e}") from None
