"""Fitness backends: one ``evaluate(strategy)`` interface over three sources.

* ``SyntheticBackend`` scores strategies on a seeded landscape.
* ``ReplayBackend`` serves scores recorded in an earlier journal.
* ``LiveBackend`` renders prompts, asks a judge model and correlates the
  extracted ratings with human labels.
"""

from __future__ import annotations

import logging
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol

from .dataset import Dataset, RatingSample
from .errors import CacheMissError, ConfigError, ExtractionError, UndefinedCorrelationError
from .judge import GREEDY, Decode, Judge, judge_call
from .landscape import SyntheticLandscape
from .metrics import ScorePair, pairwise_accuracy, spearman_dataset, spearman_sample
from .prompts import TemplatePack, render_aux_prompt, render_evaluation_prompt, required_aux, select_icl_examples
from .space import FactorSpace, Strategy

log = logging.getLogger(__name__)

FAILURE_LIMIT = 0.2


@dataclass
class Fitness:
    score: float
    # extra journal fields (per-sample trace, failure counts); empty for offline backends
    detail: dict = field(default_factory=dict)


class Backend(Protocol):
    kind: str
    space: FactorSpace

    def evaluate(self, s: Strategy) -> Fitness: ...


class SyntheticBackend:
    kind = "synth"

    def __init__(self, space: FactorSpace, landscape: SyntheticLandscape, seed: int = 0):
        if [len(w) for w in landscape.weights] != list(space.sizes):
            raise ConfigError("landscape weights do not match the factor space")
        self.space = space
        self.landscape = landscape
        self.seed = seed
        self.calls = 0

    def evaluate(self, s: Strategy) -> Fitness:
        self.space.validate(s)
        self.calls += 1
        return Fitness(self.landscape.fitness(s, self.seed))


class ReplayBackend:
    """Scores from prior journal records; unknown strategies raise ``CacheMissError``."""

    kind = "replay"

    def __init__(self, space: FactorSpace, records: Iterable[Mapping]):
        self.space = space
        self.scores: dict[Strategy, float] = {}
        for rec in records:
            self.scores[space.from_dict(rec["strategy"])] = float(rec["score"])

    def evaluate(self, s: Strategy) -> Fitness:
        try:
            return Fitness(self.scores[tuple(s)])
        except KeyError:
            raise CacheMissError(f"no recorded score for {self.space.key(s)}") from None


def correlate(dataset: Dataset, human: Mapping[str, float], predicted: Mapping[str, float]) -> float:
    pairs = [
        ScorePair(human[s.id], predicted[s.id], s.group) for s in dataset.samples if s.id in predicted
    ]
    if dataset.mode == "pairwise":
        return pairwise_accuracy(pairs)
    if dataset.grain == "sample":
        # extraction failures can leave a group with one member; such groups carry no rank signal
        sizes = Counter(p.group for p in pairs)
        pairs = [p for p in pairs if sizes[p.group] >= 2]
        if not pairs:
            raise UndefinedCorrelationError("no group retains two scored samples")
        return spearman_sample(pairs)
    if len(pairs) < 2:
        raise UndefinedCorrelationError("fewer than two scored samples")
    return spearman_dataset(pairs)


class LiveBackend:
    kind = "live"

    def __init__(
        self,
        space: FactorSpace,
        dataset: Dataset,
        pack: TemplatePack,
        judge: Judge,
        decode: Decode = GREEDY,
        *,
        parallelism: int = 8,
        icl_seed: int = 0,
    ):
        if pack.mode != dataset.mode:
            raise ConfigError(f"pack is {pack.mode} but dataset is {dataset.mode}")
        pack.check_space(space)
        self.space = space
        self.dataset = dataset
        self.pack = pack
        self.judge = judge
        self.decode = decode
        self.parallelism = max(1, parallelism)
        self.icl_seed = icl_seed
        self._aux: dict[tuple, str] = {}
        self._aux_lock = threading.Lock()

    def _aux_text(self, kind: str, scale_max: int | None, sample: RatingSample | None) -> str:
        key = (kind, scale_max, None if sample is None else sample.id)
        with self._aux_lock:
            if key in self._aux:
                return self._aux[key]
        prompt = render_aux_prompt(
            kind, self.pack, aspect=self.dataset.aspect, criteria=self.dataset.criteria, sample=sample, scale_max=scale_max
        )
        texts, _ = self.judge.generate(prompt, GREEDY)
        with self._aux_lock:
            self._aux[key] = texts[0]
        return texts[0]

    def _aux_for(self, need: frozenset[str], scale_max: int | None, sample: RatingSample) -> dict[str, str]:
        aux = {}
        for kind in sorted(need):
            per_sample = kind in ("reference", "metrics")
            aux[kind] = self._aux_text(kind, scale_max, sample if per_sample else None)
        return aux

    def _judge_sample(self, choice: dict[str, str], sample: RatingSample, scale_max: int | None) -> dict:
        need = required_aux(choice)
        aux = self._aux_for(need, scale_max, sample)
        icl = select_icl_examples(self.dataset, int(choice["examples"]), sample.id, self.icl_seed)
        prompt = render_evaluation_prompt(
            choice, sample, self.pack, aux, icl, aspect=self.dataset.aspect, criteria=self.dataset.criteria
        )
        try:
            j = judge_call(self.judge, prompt.text, self.decode, scale_max)
        except ExtractionError as e:
            log.info("sample %s: %s", sample.id, e)
            texts, key = self.judge.generate(prompt.text, self.decode)
            return {"sample": sample.id, "cache_key": key, "predicted": None, "failures": len(texts)}
        return {"sample": sample.id, "cache_key": j.cache_key, "predicted": j.score, "failures": j.failures}

    def evaluate(self, s: Strategy) -> Fitness:
        choice = self.space.to_dict(self.space.validate(s))
        scale_max = int(choice["scale"]) if self.dataset.mode == "pointwise" else None
        samples = self.dataset.samples
        # aux artifacts shared across samples are generated once up front so
        # worker threads never race on the same generation request
        for kind in sorted(required_aux(choice) & {"autocot", "criteria"}):
            self._aux_text(kind, scale_max, None)
        with ThreadPoolExecutor(max_workers=min(self.parallelism, len(samples))) as pool:
            trace = list(pool.map(lambda smp: self._judge_sample(choice, smp, scale_max), samples))

        predicted = {t["sample"]: t["predicted"] for t in trace if t["predicted"] is not None}
        failed = len(samples) - len(predicted)
        detail = {"failures": failed, "trace": trace}
        if failed > FAILURE_LIMIT * len(samples):
            log.warning("%d of %d samples unparseable; scoring %s as 0", failed, len(samples), self.space.key(s))
            return Fitness(0.0, {**detail, "flag": "extraction_failures"})
        human = {smp.id: smp.human for smp in samples}
        try:
            score = correlate(self.dataset, human, predicted)
        except UndefinedCorrelationError as e:
            log.warning("correlation undefined for %s (%s); scoring 0", self.space.key(s), e)
            return Fitness(0.0, {**detail, "flag": "undefined_correlation"})
        return Fitness(score, detail)
