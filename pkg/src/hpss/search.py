"""Advantage-guided heuristic search and the baseline searches.

Every algorithm is a deterministic function of (space, fitness, config). All
fitness evaluations go through ``Evaluations``, which enforces the budget and
the no-repeat rule, writes journal records, and can serve the head of an
earlier journal instead of calling the backend. Resuming a run is therefore a
rerun from step 0 that replays the recorded prefix and goes live afterwards.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, IntegrityError, SpaceExhausted
from .fitness import Backend
from .space import FactorSpace, Strategy, neighbor_moves

KINDS = ("init", "explore", "exploit", "greedy", "stepwise", "random")


@dataclass(frozen=True)
class SearchConfig:
    k: int = 5
    g: int = 2
    rho: float = 0.2
    tau: float = 5.0
    lam: float = 4.0
    budget: int = 71
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.g < 1:
            raise ConfigError("k and g must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")

    def to_dict(self) -> dict:
        return {"k": self.k, "g": self.g, "rho": self.rho, "tau": self.tau, "lambda": self.lam,
                "budget": self.budget, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SearchConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


# ---------------------------------------------------------------- evaluations


class ReplayExhausted(Exception):
    """Raised when a replay needs an evaluation beyond the recorded prefix and no backend is attached."""


class Evaluations:
    """Budgeted, duplicate-free access to fitness, recorded as journal entries."""

    def __init__(
        self,
        space: FactorSpace,
        backend: Backend | None,
        budget: int,
        *,
        seed: int = 0,
        prior: Sequence[Mapping] = (),
        sink: Callable[[dict], None] | None = None,
    ):
        self.space = space
        self.backend = backend
        self.budget = budget
        self.seed = seed
        self.prior = list(prior)
        self.sink = sink
        self.records: list[dict] = []
        self.explored: dict[Strategy, float] = {}
        if len(self.prior) > budget:
            raise IntegrityError(f"journal holds {len(self.prior)} records but the budget is {budget}")

    @property
    def cost(self) -> int:
        return len(self.records)

    @property
    def remaining(self) -> int:
        return self.budget - len(self.records)

    def __contains__(self, s: Strategy) -> bool:
        return s in self.explored

    def __call__(self, s: Strategy, kind: str, modified: int | None = None) -> float:
        if s in self.explored:
            raise AssertionError(f"strategy evaluated twice: {self.space.key(s)}")
        if self.remaining <= 0:
            raise AssertionError("evaluation past the budget")
        step = len(self.records)
        strategy = self.space.to_dict(s)
        mod = None if modified is None else self.space.factors[modified].id
        if step < len(self.prior):
            rec = dict(self.prior[step])
            if rec.get("strategy") != strategy or rec.get("kind") != kind or rec.get("modified_factor") != mod:
                raise IntegrityError(
                    f"journal diverges from the search: recorded {rec.get('kind')} {rec.get('strategy')}, "
                    f"search wants {kind} {strategy}",
                    line=step + 1,
                )
        elif self.backend is None:
            raise ReplayExhausted(step)
        else:
            fit = self.backend.evaluate(s)
            rec = {"step": step, "kind": kind, "strategy": strategy, "modified_factor": mod,
                   "score": float(fit.score), "seed": self.seed, **fit.detail}
            if self.sink is not None:
                self.sink(rec)
        score = float(rec["score"])
        self.records.append(rec)
        self.explored[s] = score
        return score

    def best(self) -> tuple[Strategy, float]:
        """Global best over everything evaluated; ties go to the earliest."""
        best_s, best_r = None, -math.inf
        for s, r in self.explored.items():  # insertion order is journal order
            if r > best_r:
                best_s, best_r = s, r
        return best_s, best_r


@dataclass
class SearchResult:
    algorithm: str
    best: Strategy
    score: float
    records: list[dict]
    exhausted: bool = False

    @property
    def evaluations(self) -> int:
        return len(self.records)


# ---------------------------------------------------------------- advantage table


@dataclass
class AdvantageTable:
    A: list[np.ndarray]
    N: list[np.ndarray]
    M: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "AdvantageTable":
        return cls(
            [np.zeros(m) for m in sizes],
            [np.zeros(m, dtype=np.int64) for m in sizes],
            [np.zeros(m, dtype=np.int64) for m in sizes],
        )

    def observe(self, s: Strategy) -> None:
        """Count one evaluation of ``s``: every value it uses appears once more."""
        for i, j in enumerate(s):
            self.M[i][j] += 1
        self.t += 1

    def total(self, s: Strategy) -> float:
        return float(sum(self.A[i][j] for i, j in enumerate(s)))

    def to_dict(self) -> dict:
        return {
            "A": [a.tolist() for a in self.A],
            "N": [n.tolist() for n in self.N],
            "M": [m.tolist() for m in self.M],
            "t": self.t,
        }

    def equals(self, other: "AdvantageTable") -> bool:
        same = lambda xs, ys: all(np.array_equal(x, y) for x, y in zip(xs, ys))  # noqa: E731
        return self.t == other.t and same(self.A, other.A) and same(self.N, other.N) and same(self.M, other.M)


def moving_average(a_new: float, n: int, r_new: float, r_cur: float, a_cur: float) -> float:
    """One observation folded into the running advantage of the explored value."""
    return (a_new * n + (r_new - (r_cur - a_cur))) / (n + 1)


def update_advantage(table: AdvantageTable, i: int, c: int, j: int, r_new: float, r_cur: float) -> None:
    """Fold the move ``c -> j`` on factor ``i`` into ``A`` and re-centre the factor."""
    row = table.A[i]
    row[j] = moving_average(row[j], int(table.N[i][j]), r_new, r_cur, row[c])
    row -= row.mean()
    table.N[i][j] += 1


def exploration_probabilities(
    current: Strategy, table: AdvantageTable, space: FactorSpace, config: SearchConfig
) -> tuple[list[tuple[Strategy, int, int]], np.ndarray]:
    """Neighbors of ``current`` and their sampling probabilities.

    A neighbor whose new value has never appeared (M = 0) has an unbounded
    bonus; the lexicographically smallest such neighbor takes all the mass.
    """
    moves = neighbor_moves(space, current)
    if not moves:
        raise SpaceExhausted("strategy has no neighbors")
    unseen = [k for k, (s, i, j) in enumerate(moves) if table.M[i][j] == 0]
    p = np.zeros(len(moves))
    if unseen:
        p[min(unseen, key=lambda k: moves[k][0])] = 1.0
        return moves, p
    log_t = math.log(max(table.t, 1))
    b = np.array([
        (table.A[i][j] - table.A[i][current[i]]) + config.lam * math.sqrt(log_t / table.M[i][j])
        for _, i, j in moves
    ])
    z = b / config.tau
    z -= z.max()
    w = np.exp(z)
    return moves, w / w.sum()


def exploitation_pick(table: AdvantageTable, space: FactorSpace, explored: Iterable[Strategy] | Mapping) -> Strategy:
    """Unexplored strategy with the highest summed advantage.

    Best-first enumeration over per-factor value rankings: strategies come off
    the frontier in order of decreasing total advantage, ties in lexicographic
    order, so the first unexplored one is the answer.
    """
    explored = explored if isinstance(explored, (set, dict, frozenset)) else set(explored)
    if len(explored) >= space.size:
        raise SpaceExhausted(f"all {space.size} strategies explored")
    # values of each factor by decreasing advantage; equal advantages by index
    ranked = [sorted(range(m), key=lambda j, a=table.A[i]: (-a[j], j)) for i, m in enumerate(space.sizes)]

    def entry(ranks: tuple[int, ...]):
        s = tuple(ranked[i][r] for i, r in enumerate(ranks))
        return (-table.total(s), s, ranks)

    start = (0,) * space.n
    heap = [entry(start)]
    seen = {start}
    while heap:
        _, s, ranks = heapq.heappop(heap)
        if s not in explored:
            return s
        for i in range(space.n):
            if ranks[i] + 1 < space.sizes[i]:
                child = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1 :]
                if child not in seen:
                    seen.add(child)
                    heapq.heappush(heap, entry(child))
    raise SpaceExhausted(f"all {space.size} strategies explored")


# ---------------------------------------------------------------- searches


class Search:
    name = ""

    def __init__(self, space: FactorSpace, config: SearchConfig):
        self.space = space
        self.config = config
        self.rng = np.random.default_rng(config.seed)

    def run(self, ev: Evaluations) -> SearchResult:
        exhausted = False
        try:
            self._run(ev)
        except SpaceExhausted:
            exhausted = True
        best, score = ev.best()
        return SearchResult(self.name, best, score, ev.records, exhausted)

    def _run(self, ev: Evaluations) -> None:
        raise NotImplementedError


def _top_k(entries: Iterable[tuple[int, Strategy, float]], k: int) -> list[tuple[int, Strategy, float]]:
    # entries are (journal index, strategy, score); higher score first, then earlier index
    unique = {}
    for idx, s, r in entries:
        if s not in unique or idx < unique[s][0]:
            unique[s] = (idx, s, r)
    return sorted(unique.values(), key=lambda e: (-e[2], e[0]))[:k]


class HPSS(Search):
    name = "hpss"

    def __init__(self, space: FactorSpace, config: SearchConfig):
        super().__init__(space, config)
        self.table = AdvantageTable.zeros(space.sizes)
        self.population: list[tuple[int, Strategy, float]] = []
        self._sweep: list[tuple[int, Strategy, float]] = []

    def _eval(self, ev: Evaluations, s: Strategy, kind: str, modified: int | None = None) -> float:
        r = ev(s, kind, modified)
        self.table.observe(s)
        self._sweep.append((ev.cost - 1, s, r))
        return r

    def initialize(self, ev: Evaluations) -> None:
        space = self.space
        if ev.budget < space.init_cost:
            raise ConfigError(f"budget {ev.budget} is below the initialization cost {space.init_cost}")
        base = space.baseline
        r_base = self._eval(ev, base, "init")
        scores = [np.full(m, np.nan) for m in space.sizes]
        for i in range(space.n):
            scores[i][base[i]] = r_base
        for s, i, j in neighbor_moves(space, base):
            scores[i][j] = self._eval(ev, s, "init", i)
        for i in range(space.n):
            self.table.A[i] = scores[i] - scores[i].mean()
            self.table.N[i][:] = 1
        self.population = _top_k(self._sweep, self.config.k)

    def _mutate(self, ev: Evaluations, cur: Strategy, r_cur: float) -> None:
        cfg = self.config
        retries = sum(m - 1 for m in self.space.sizes)
        for _ in range(max(retries, 1)):
            moves, p = exploration_probabilities(cur, self.table, self.space, cfg)
            new, i, j = moves[int(self.rng.choice(len(moves), p=p))]
            if new in ev:
                continue
            if self.rng.random() < cfg.rho:
                self._eval(ev, exploitation_pick(self.table, self.space, ev.explored), "exploit")
            else:
                r_new = self._eval(ev, new, "explore", i)
                update_advantage(self.table, i, cur[i], j, r_new, r_cur)
            return
        # whole neighborhood explored (or unlucky draws): jump instead of spinning
        self._eval(ev, exploitation_pick(self.table, self.space, ev.explored), "exploit")

    def _run(self, ev: Evaluations) -> None:
        self.initialize(ev)
        while ev.remaining > 0:
            self._sweep = list(self.population)
            for _, cur, r_cur in self.population:
                for _ in range(self.config.g):
                    if ev.remaining <= 0:
                        break
                    self._mutate(ev, cur, r_cur)
            self.population = _top_k(self._sweep, self.config.k)


class Greedy(Search):
    """Hill climbing from the baseline over uniformly sampled single-factor moves."""

    name = "greedy"
    width = 5

    def _run(self, ev: Evaluations) -> None:
        cur = self.space.baseline
        r_cur = ev(cur, "greedy")
        while ev.remaining > 0:
            moves = [(s, i) for s, i, _ in neighbor_moves(self.space, cur) if s not in ev]
            if not moves:
                return  # local optimum with a fully explored neighborhood
            picks = self.rng.choice(len(moves), size=min(self.width, len(moves)), replace=False)
            best, r_best = cur, r_cur
            for k in picks:
                if ev.remaining <= 0:
                    break
                s, i = moves[int(k)]
                r = ev(s, "greedy", i)
                if r > r_best:
                    best, r_best = s, r
            cur, r_cur = best, r_best


class StepwiseGreedy(Search):
    """One pass of coordinate ascent in factor order, starting from the baseline."""

    name = "stepwise"

    def _run(self, ev: Evaluations) -> None:
        cur = self.space.baseline
        r_cur = ev(cur, "stepwise")
        for i, m in enumerate(self.space.sizes):
            best, r_best = cur, r_cur
            for j in range(m):
                if j == cur[i]:
                    continue
                if ev.remaining <= 0:
                    return
                s = cur[:i] + (j,) + cur[i + 1 :]
                r = ev(s, "stepwise", i)
                if r > r_best:
                    best, r_best = s, r
            cur, r_cur = best, r_best


class RandomSearch(Search):
    name = "random"

    def _run(self, ev: Evaluations) -> None:
        n = min(ev.budget, self.space.size)
        for idx in self.rng.choice(self.space.size, size=n, replace=False):
            if ev.remaining <= 0:
                return
            ev(self.space.decode(int(idx)), "random")


ALGORITHMS: dict[str, type[Search]] = {c.name: c for c in (HPSS, Greedy, StepwiseGreedy, RandomSearch)}


def make_search(algorithm: str, space: FactorSpace, config: SearchConfig) -> Search:
    try:
        return ALGORITHMS[algorithm](space, config)
    except KeyError:
        raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}") from None


def run_search(
    algorithm: str,
    space: FactorSpace,
    backend: Backend | None,
    config: SearchConfig,
    *,
    prior: Sequence[Mapping] = (),
    sink: Callable[[dict], None] | None = None,
) -> SearchResult:
    search = make_search(algorithm, space, config)
    if algorithm == "hpss" and config.budget < space.init_cost:
        raise ConfigError(f"budget {config.budget} is below the initialization cost {space.init_cost}")
    ev = Evaluations(space, backend, config.budget, seed=config.seed, prior=prior, sink=sink)
    return search.run(ev)


def hpss_search(space: FactorSpace, backend: Backend, config: SearchConfig = SearchConfig()) -> SearchResult:
    return run_search("hpss", space, backend, config)


def greedy_search(space: FactorSpace, backend: Backend, config: SearchConfig = SearchConfig()) -> SearchResult:
    return run_search("greedy", space, backend, config)


def stepwise_greedy_search(space: FactorSpace, backend: Backend, config: SearchConfig = SearchConfig()) -> SearchResult:
    return run_search("stepwise", space, backend, config)


def random_search(space: FactorSpace, backend: Backend, config: SearchConfig = SearchConfig()) -> SearchResult:
    return run_search("random", space, backend, config)


@dataclass
class ResumeState:
    algorithm: str
    cost: int
    explored: set[Strategy]
    population: list[tuple[Strategy, float]] = field(default_factory=list)
    table: AdvantageTable | None = None
    complete: bool = False


def replay_state(algorithm: str, space: FactorSpace, config: SearchConfig, records: Sequence[Mapping]) -> ResumeState:
    """Search state after the journal prefix ``records``, rebuilt by rerunning the algorithm."""
    search = make_search(algorithm, space, config)
    ev = Evaluations(space, None, config.budget, seed=config.seed, prior=records)
    complete = True
    try:
        search.run(ev)
    except ReplayExhausted:
        complete = False
    if ev.cost != len(records):
        raise IntegrityError(f"journal has {len(records)} records but the search consumed {ev.cost}", line=ev.cost + 1)
    state = ResumeState(algorithm, ev.cost, set(ev.explored), complete=complete)
    if isinstance(search, HPSS):
        state.table = search.table
        # mid-sweep, the candidates for the next population are the sweep so far
        entries = search.population if complete else search._sweep
        state.population = [(s, r) for _, s, r in _top_k(entries, config.k)]
    return state
