"""Render a strategy and a sample into the evaluation prompt sent to the judge.

Rendering runs in two passes. The structure pass fills the backbone's slots
(``{chain_of_thought}``, ``{metrics_block}``, ...) with the fragments the
strategy selects and tidies the layout; the content pass then substitutes
sample text (``{article}``, ``{aspect}``, ...) in a single non-recursive pass,
so braces inside sample text are never interpreted.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from itertools import permutations
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .dataset import Dataset, RatingSample
from .errors import ConfigError, DependencyError, StructuralError

COMPONENTS = ("TD", "ER", "IC")
SLOTS = (
    "reference_1",
    "reference_2",
    "reference_dialectic",
    "chain_of_thought",
    "criteria_block",
    "autocot_block",
    "examples_block",
    "metrics_block",
)
AUX_KINDS = ("reference", "autocot", "metrics", "criteria")
ICL_COUNTS = (0, 3, 5, 10)
ORDERS = tuple("-".join(p) for p in permutations(COMPONENTS))
FAMILIES = ("summarization", "dialogue", "data_to_text", "story", "pairwise")

_PLACEHOLDER = re.compile(r"\{(\w+)\}")
_SPACES = re.compile(r" {2,}")

# factor id -> values the renderer understands (scale/examples are numeric)
KNOWN_VALUES = {
    "criteria": ("none", "human", "self_generated"),
    "reference": ("none", "self_generated", "dialectic"),
    "cot": ("none", "prefix", "suffix"),
    "autocot": ("none", "autocot"),
    "metrics": ("none", "metrics"),
    "order": ORDERS,
}

DEFAULT_CHOICE = {
    "examples": "0",
    "criteria": "human",
    "reference": "none",
    "cot": "prefix",
    "autocot": "none",
    "metrics": "none",
    "order": "TD-ER-IC",
}


@dataclass(frozen=True, eq=False)
class TemplatePack:
    task_family: str
    mode: str
    input_fields: tuple[str, ...]
    components: Mapping[str, tuple[str, ...]]
    fragments: Mapping[str, object]
    aux: Mapping[str, str]

    def check_space(self, space) -> None:
        """Raise ConfigError unless every value in ``space`` has a rendering."""
        for f in space.factors:
            if f.id == "scale":
                if self.mode == "pairwise":
                    raise ConfigError("pairwise packs have no scoring scale")
                for v in f.values:
                    if not v.isdigit() or int(v) < 1:
                        raise ConfigError(f"scale value {v!r} is not a positive integer")
            elif f.id == "examples":
                for v in f.values:
                    if not v.isdigit() or int(v) not in ICL_COUNTS:
                        raise ConfigError(f"example count {v!r} not in {ICL_COUNTS}")
            elif f.id in KNOWN_VALUES:
                allowed = KNOWN_VALUES[f.id]
                if f.id == "cot":
                    allowed = tuple(self.fragments["chain_of_thought"])
                bad = [v for v in f.values if v not in allowed]
                if bad:
                    raise ConfigError(f"factor {f.id!r}: no rendering for values {bad}")
                if f.id == "criteria" and "self_generated" in f.values and "criteria" not in self.aux:
                    raise ConfigError("pack cannot generate criteria")
            else:
                raise ConfigError(f"pack {self.task_family!r} has no rendering for factor {f.id!r}")


def pack_from_config(cfg: Mapping) -> TemplatePack:
    try:
        components = {c: tuple(cfg["components"][c]) for c in COMPONENTS}
        pack = TemplatePack(
            task_family=str(cfg["task_family"]),
            mode=str(cfg.get("mode", "pointwise")),
            input_fields=tuple(cfg["input_fields"]),
            components=components,
            fragments=dict(cfg["fragments"]),
            aux=dict(cfg.get("aux", {})),
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed template pack: {e!r}") from None
    missing = {"example", "chain_of_thought", *SLOTS} - {"chain_of_thought"} - set(pack.fragments)
    if missing:
        raise ConfigError(f"template pack lacks fragments {sorted(missing)}")
    return pack


@lru_cache(maxsize=None)
def _bundled(family: str) -> TemplatePack:
    text = resources.files("hpss").joinpath(f"packs/{family}.yaml").read_text()
    return pack_from_config(yaml.safe_load(text))


def load_pack(family_or_path: str | Path) -> TemplatePack:
    name = str(family_or_path)
    if name in FAMILIES:
        return _bundled(name)
    path = Path(name)
    if not path.exists():
        raise ConfigError(f"no template pack {name!r} (bundled: {', '.join(FAMILIES)})")
    return pack_from_config(yaml.safe_load(path.read_text()))


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    required_aux: frozenset[str]
    icl_ids: tuple[str, ...]


def _fill(template: str, values: Mapping[str, str], *, strict: bool) -> str:
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name in values:
            return values[name]
        if strict:
            raise StructuralError(f"unresolved placeholder {{{name}}}")
        return m.group(0)

    return _PLACEHOLDER.sub(sub, template)


def _tidy(block: str) -> str:
    lines = [_SPACES.sub(" ", line).rstrip() for line in block.split("\n")]
    return "\n".join(lines).strip("\n")


def _structure(blocks: Sequence[str], slots: Mapping[str, str]) -> str:
    out = [_tidy(_fill(b, slots, strict=False)) for b in blocks]
    return "\n\n".join(b for b in out if b.strip())


def _with_defaults(choice: Mapping[str, str]) -> dict[str, str]:
    return {**DEFAULT_CHOICE, **choice}


def required_aux(choice: Mapping[str, str]) -> frozenset[str]:
    c = _with_defaults(choice)
    need = set()
    if c["reference"] == "self_generated":
        need.add("reference")
    if c["autocot"] == "autocot":
        need.add("autocot")
    if c["metrics"] == "metrics":
        need.add("metrics")
    if c["criteria"] == "self_generated":
        need.add("criteria")
    return frozenset(need)


@lru_cache(maxsize=65536)
def _skeleton(pack: TemplatePack, items: tuple[tuple[str, str], ...]) -> tuple[tuple[str, str], ...]:
    # Per-component structure text for one strategy; pure in (pack, choice).
    c = dict(items)
    frag = pack.fragments
    slots = {
        "reference_1": frag["reference_1"] if c["reference"] == "self_generated" else "",
        "reference_2": frag["reference_2"] if c["reference"] == "self_generated" else "",
        "reference_dialectic": frag["reference_dialectic"] if c["reference"] == "dialectic" else "",
        "chain_of_thought": frag["chain_of_thought"][c["cot"]],
        "criteria_block": "" if c["criteria"] == "none" else frag["criteria_block"],
        "autocot_block": frag["autocot_block"] if c["autocot"] == "autocot" else "",
        "examples_block": frag["examples_block"] if int(c["examples"]) > 0 else "",
        "metrics_block": frag["metrics_block"] if c["metrics"] == "metrics" else "",
    }
    return tuple((name, _structure(pack.components[name], slots)) for name in COMPONENTS)


def rescale_rating(value: float, native: tuple[float, float], scale_max: int) -> int:
    """Map a native-scale rating linearly onto ``1..scale_max``, half-up rounding."""
    lo, hi = native
    if hi == lo:
        return 1
    x = 1 + (value - lo) * (scale_max - 1) / (hi - lo)
    return int(math.floor(x + 0.5))


def _example_rating(example: RatingSample, pack: TemplatePack, scale_max: int | None) -> str:
    if pack.mode == "pairwise":
        return "[[A]]" if example.human == 0 else "[[B]]"
    return str(rescale_rating(example.human, example.native_scale, scale_max))


def _sample_fields(sample: RatingSample, pack: TemplatePack) -> dict[str, str]:
    missing = [f for f in pack.input_fields if f not in sample.fields]
    if missing:
        raise StructuralError(f"sample {sample.id!r} lacks fields {missing} for pack {pack.task_family!r}")
    return {f: sample.fields[f] for f in pack.input_fields}


def render_components(
    choice: Mapping[str, str],
    sample: RatingSample,
    pack: TemplatePack,
    aux: Mapping[str, str],
    icl: Sequence[RatingSample],
    *,
    aspect: str,
    criteria: str = "",
) -> dict[str, str]:
    """Rendered TD / ER / IC blocks, before ordering."""
    c = _with_defaults(choice)
    need = required_aux(c)
    missing = sorted(need - set(aux))
    if missing:
        raise DependencyError(f"strategy needs aux artifacts {missing}")
    count = int(c["examples"])
    if len(icl) != count:
        raise StructuralError(f"strategy uses {count} in-context examples, got {len(icl)}")
    scale_max = int(c["scale"]) if "scale" in c else None

    content = {"aspect": aspect, **_sample_fields(sample, pack)}
    if scale_max is not None:
        content["max"] = str(scale_max)
    if c["criteria"] == "human":
        content["criteria"] = criteria
    elif c["criteria"] == "self_generated":
        content["criteria"] = aux["criteria"]
    for kind in ("reference", "autocot", "metrics"):
        if kind in need:
            content[kind] = aux[kind]
    if count:
        blocks = []
        for number, ex in enumerate(icl, 1):
            values = {**_sample_fields(ex, pack), "number": str(number), "rating": _example_rating(ex, pack, scale_max)}
            blocks.append(_fill(pack.fragments["example"], values, strict=True))
        content["examples"] = "\n\n".join(blocks)

    structure = dict(c)
    if c["criteria"] == "human" and not criteria.strip():
        structure["criteria"] = "none"
    skeleton = _skeleton(pack, tuple(sorted(structure.items())))
    return {name: _fill(text, content, strict=True) for name, text in skeleton}


def render_evaluation_prompt(
    choice: Mapping[str, str],
    sample: RatingSample,
    pack: TemplatePack,
    aux: Mapping[str, str],
    icl: Sequence[RatingSample],
    *,
    aspect: str,
    criteria: str = "",
) -> RenderedPrompt:
    """Full prompt for one strategy (factor id -> value id) and one sample."""
    order = _with_defaults(choice)["order"]
    if order not in ORDERS:
        raise StructuralError(f"unknown order {order!r}")
    parts = render_components(choice, sample, pack, aux, icl, aspect=aspect, criteria=criteria)
    text = "\n\n".join(parts[name] for name in order.split("-") if parts[name])
    return RenderedPrompt(text, required_aux(choice), tuple(ex.id for ex in icl))


def render_aux_prompt(
    kind: str,
    pack: TemplatePack,
    *,
    aspect: str,
    criteria: str = "",
    sample: RatingSample | None = None,
    scale_max: int | None = None,
) -> str:
    """Generation prompt for an auxiliary artifact.

    ``reference`` and ``metrics`` are per sample; ``autocot`` and ``criteria``
    depend only on the aspect and scale. Aux prompts always use the
    human-written criteria so one generation serves every strategy.
    """
    if kind not in AUX_KINDS or kind not in pack.aux:
        raise StructuralError(f"pack {pack.task_family!r} cannot generate {kind!r}")
    template = pack.aux[kind]
    structured = _tidy(_fill(template, {"criteria_block": "{criteria}" if criteria else ""}, strict=False))
    content = {"aspect": aspect, "criteria": criteria}
    if scale_max is not None:
        content["max"] = str(scale_max)
    if kind in ("reference", "metrics"):
        if sample is None:
            raise StructuralError(f"{kind!r} generation needs a sample")
        content.update(_sample_fields(sample, pack))
    return _fill(structured, content, strict=True)


def _seed_for(seed: int, count: int, exclude: str | None) -> list[int]:
    tag = hashlib.sha256(f"{count}:{exclude}".encode()).digest()
    return [seed, int.from_bytes(tag[:8], "big")]


def select_icl_examples(dataset: Dataset, count: int, exclude: str | None, seed: int) -> list[RatingSample]:
    """Stratified draw of in-context examples over human-rating strata.

    With at most ``count`` distinct ratings, each rating is a stratum: one draw
    per stratum, then the remainder round-robin over strata in rating order.
    With more distinct ratings than ``count``, the sorted pool is cut into
    ``count`` equal-frequency bins and one example is drawn per bin.
    """
    if count not in ICL_COUNTS:
        raise StructuralError(f"example count {count} not in {ICL_COUNTS}")
    if count == 0:
        return []
    pool = sorted((s for s in dataset.samples if s.id != exclude), key=lambda s: (s.human, s.id))
    if len(pool) < count:
        raise StructuralError(f"need {count} examples, pool has {len(pool)} after exclusion")
    rng = np.random.default_rng(_seed_for(seed, count, exclude))

    ratings = sorted({s.human for s in pool})
    if len(ratings) <= count:
        strata = [[s for s in pool if s.human == r] for r in ratings]
    else:
        strata = [list(b) for b in np.array_split(np.array(pool, dtype=object), count)]
    for st in strata:
        rng.shuffle(st)
    picked: list[RatingSample] = []
    depth = 0
    while len(picked) < count:
        for st in strata:
            if depth < len(st) and len(picked) < count:
                picked.append(st[depth])
        depth += 1
    return picked
