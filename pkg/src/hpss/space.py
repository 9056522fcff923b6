"""Factorized search space of evaluation-prompt strategies.

A strategy is a plain tuple of value indices, one per factor, in the order
the space lists its factors. Spaces are loaded from YAML so the bundled
presets and user-defined toy spaces go through the same code path.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import yaml

from .errors import ConfigError, StructuralError

Strategy = tuple[int, ...]

PRESETS = ("pointwise_v1", "pairwise_v1")


@dataclass(frozen=True)
class Factor:
    id: str
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) < 1:
            raise ConfigError(f"factor {self.id!r} has no values")
        if len(set(self.values)) != len(self.values):
            raise ConfigError(f"factor {self.id!r} has duplicate value ids")

    @property
    def size(self) -> int:
        return len(self.values)

    def index(self, value: str) -> int:
        try:
            return self.values.index(str(value))
        except ValueError:
            raise StructuralError(
                f"unknown value {value!r} for factor {self.id!r}; expected one of {list(self.values)}"
            ) from None


@dataclass(frozen=True)
class FactorSpace:
    factors: tuple[Factor, ...]
    baseline: Strategy
    id: str = "custom"
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [f.id for f in self.factors]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate factor ids in space {self.id!r}")
        object.__setattr__(self, "_index", {fid: i for i, fid in enumerate(ids)})
        object.__setattr__(self, "baseline", tuple(self.baseline))
        self.validate(self.baseline)

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @property
    def size(self) -> int:
        return math.prod(self.sizes)

    @property
    def init_cost(self) -> int:
        """Evaluations consumed by the baseline plus all single-factor perturbations."""
        return 1 + sum(m - 1 for m in self.sizes)

    def factor_index(self, factor_id: str) -> int:
        try:
            return self._index[factor_id]
        except KeyError:
            raise StructuralError(f"unknown factor {factor_id!r}") from None

    def validate(self, s: Sequence[int]) -> Strategy:
        s = tuple(s)
        if len(s) != self.n:
            raise StructuralError(f"strategy has {len(s)} entries, space has {self.n} factors")
        for f, j in zip(self.factors, s):
            if not isinstance(j, int) or not 0 <= j < f.size:
                raise StructuralError(f"value index {j!r} out of range for factor {f.id!r}")
        return s

    # canonical serialization

    def key(self, s: Strategy) -> str:
        """Order-stable text form, e.g. ``scale=5|examples=0|...``."""
        return "|".join(f"{f.id}={f.values[j]}" for f, j in zip(self.factors, s))

    def from_key(self, key: str) -> Strategy:
        parts = dict(p.split("=", 1) for p in key.split("|")) if key else {}
        return self.from_dict(parts)

    def digest(self, s: Strategy) -> str:
        return hashlib.sha256(self.key(s).encode()).hexdigest()

    def to_dict(self, s: Strategy) -> dict[str, str]:
        return {f.id: f.values[j] for f, j in zip(self.factors, s)}

    def from_dict(self, d: Mapping[str, object]) -> Strategy:
        extra = set(d) - set(self._index)
        if extra:
            raise StructuralError(f"unknown factors {sorted(extra)}")
        missing = [f.id for f in self.factors if f.id not in d]
        if missing:
            raise StructuralError(f"missing factors {missing}")
        return tuple(f.index(str(d[f.id])) for f in self.factors)

    # integer encoding, used by random search

    def encode(self, s: Strategy) -> int:
        idx = 0
        for m, j in zip(self.sizes, s):
            idx = idx * m + j
        return idx

    def decode(self, idx: int) -> Strategy:
        out = []
        for m in reversed(self.sizes):
            idx, j = divmod(idx, m)
            out.append(j)
        return tuple(reversed(out))

    def with_baseline(self, **overrides: str) -> "FactorSpace":
        values = self.to_dict(self.baseline)
        for fid, v in overrides.items():
            self.factor_index(fid)
            values[fid] = str(v)
        return FactorSpace(self.factors, self.from_dict(values), id=self.id)

    def to_config(self) -> dict:
        return {
            "id": self.id,
            "factors": [{"id": f.id, "name": f.name, "values": list(f.values)} for f in self.factors],
            "baseline": self.to_dict(self.baseline),
        }


def space_from_config(cfg: Mapping) -> FactorSpace:
    try:
        factors = tuple(
            Factor(str(f["id"]), str(f.get("name", f["id"])), tuple(str(v) for v in f["values"]))
            for f in cfg["factors"]
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed factor space config: {e}") from None
    baseline_cfg = cfg.get("baseline")
    if baseline_cfg is None:
        baseline = tuple(0 for _ in factors)
    else:
        try:
            baseline = tuple(f.index(str(baseline_cfg[f.id])) for f in factors)
        except (KeyError, StructuralError) as e:
            raise ConfigError(f"invalid baseline: {e}") from None
    return FactorSpace(factors, baseline, id=str(cfg.get("id", "custom")))


def load_space(name_or_path: str | Path, **baseline_overrides: str) -> FactorSpace:
    """Load a bundled preset by name or a YAML/JSON space file by path."""
    name = str(name_or_path)
    if name in PRESETS:
        text = resources.files("hpss").joinpath(f"presets/{name}.yaml").read_text()
    else:
        path = Path(name)
        if not path.exists():
            raise ConfigError(f"no preset or file named {name!r} (presets: {', '.join(PRESETS)})")
        text = path.read_text()
    space = space_from_config(yaml.safe_load(text))
    return space.with_baseline(**baseline_overrides) if baseline_overrides else space


def toy_space(*sizes: int, baseline: Sequence[int] | None = None) -> FactorSpace:
    """Anonymous space with factors ``F1..Fn`` and values ``0..m-1``."""
    factors = tuple(Factor(f"F{i + 1}", f"F{i + 1}", tuple(str(j) for j in range(m))) for i, m in enumerate(sizes))
    return FactorSpace(factors, tuple(baseline) if baseline is not None else (0,) * len(sizes), id="toy")


def neighbor_moves(space: FactorSpace, s: Strategy) -> list[tuple[Strategy, int, int]]:
    """Single-factor changes of ``s`` as ``(strategy, factor, new value)``, factor-major."""
    space.validate(s)
    out = []
    for i, m in enumerate(space.sizes):
        for j in range(m):
            if j != s[i]:
                out.append((s[:i] + (j,) + s[i + 1 :], i, j))
    return out


def neighbors(space: FactorSpace, s: Strategy) -> list[Strategy]:
    return [n for n, _, _ in neighbor_moves(space, s)]


def init_perturbations(space: FactorSpace) -> list[Strategy]:
    return [space.baseline, *neighbors(space, space.baseline)]


def enumerate_strategies(space: FactorSpace) -> Iterator[Strategy]:
    """Every strategy once, in lexicographic order of the assignment."""
    return itertools.product(*(range(m) for m in space.sizes))
