"""Seeded synthetic fitness landscapes for offline verification of the search.

Fitness is a per-value weight sum plus sparse pairwise interaction terms plus
optional noise that is frozen per (seed, strategy).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .space import FactorSpace, Strategy

# ((factor, value), (factor', value')) with factor < factor'
Pair = tuple[tuple[int, int], tuple[int, int]]


@dataclass
class SyntheticLandscape:
    weights: list[list[float]]
    interactions: dict[Pair, float] = field(default_factory=dict)
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        clean = {}
        for (a, b), u in self.interactions.items():
            a, b = tuple(a), tuple(b)
            if a[0] == b[0]:
                raise ConfigError("interaction terms must couple two different factors")
            clean[(a, b) if a < b else (b, a)] = float(u)
        self.interactions = clean
        self._by_factor: dict[int, list[tuple[int, int, int, float]]] = {}
        for ((i, j), (i2, j2)), u in self.interactions.items():
            self._by_factor.setdefault(i, []).append((j, i2, j2, u))

    def base(self, s: Strategy) -> float:
        total = 0.0
        for i, j in enumerate(s):
            total += self.weights[i][j]
        for i, terms in sorted(self._by_factor.items()):
            for j, i2, j2, u in terms:
                if s[i] == j and s[i2] == j2:
                    total += u
        return total

    def noise(self, s: Strategy, seed: int) -> float:
        if self.sigma == 0:
            return 0.0
        tag = hashlib.sha256(f"{seed}:{','.join(map(str, s))}".encode()).digest()
        return self.sigma * float(np.random.default_rng(int.from_bytes(tag[:8], "big")).standard_normal())

    def fitness(self, s: Strategy, seed: int = 0) -> float:
        return self.base(s) + self.noise(s, seed)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights,
            "interactions": [[list(a), list(b), u] for (a, b), u in sorted(self.interactions.items())],
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticLandscape":
        inter = {(tuple(a), tuple(b)): float(u) for a, b, u in d.get("interactions", [])}
        return cls([list(map(float, w)) for w in d["weights"]], inter, float(d.get("sigma", 0.0)))


def synthetic_fitness(land: SyntheticLandscape, s: Strategy, seed: int = 0) -> float:
    return land.fitness(s, seed)


def separable_landscape(space: FactorSpace, seed: int, scale: float = 1.0, sigma: float = 0.0) -> SyntheticLandscape:
    rng = np.random.default_rng([seed, 1])
    weights = [[float(scale * rng.standard_normal()) for _ in range(m)] for m in space.sizes]
    return SyntheticLandscape(weights, {}, sigma)


def interacting_landscape(
    space: FactorSpace,
    seed: int,
    n_pairs: int | None = None,
    scale: float = 1.0,
    interaction_scale: float = 1.0,
    sigma: float = 0.0,
) -> SyntheticLandscape:
    """Standard-normal weights plus ``n_pairs`` random value-pair couplings.

    ``n_pairs`` defaults to twice the number of factors. Couplings are drawn
    with the same magnitude as the weights unless ``interaction_scale`` says
    otherwise.
    """
    rng = np.random.default_rng([seed, 2])
    weights = [[float(scale * rng.standard_normal()) for _ in range(m)] for m in space.sizes]
    multi = [i for i, m in enumerate(space.sizes) if m > 1]
    if n_pairs is None:
        n_pairs = 2 * space.n
    inter: dict[Pair, float] = {}
    if len(multi) >= 2:
        for _ in range(n_pairs):
            i, i2 = sorted(int(x) for x in rng.choice(multi, size=2, replace=False))
            j = int(rng.integers(space.sizes[i]))
            j2 = int(rng.integers(space.sizes[i2]))
            key = ((i, j), (i2, j2))
            inter[key] = inter.get(key, 0.0) + float(interaction_scale * scale * rng.standard_normal())
    return SyntheticLandscape(weights, inter, sigma)
