"""Generational genetic algorithm over conditional configurations.

Tournament selection, uniform crossover with condition-aware repair, per-gene
prior-resample mutation, single-individual elitism. Configurations reported
before the first suggestion (warm starts) seed the initial population.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..space import Config, SearchSpace, _draw, sample
from ..utils import spawn_rng
from .base import HistoryEntry, Optimizer

_SALT_GA_INIT = 0x6A11
_SALT_GA_GEN = 0x6A57


@dataclass
class GAIndividual:
    genome: Config
    fitness: float | None = None


def _tournament(population: list[GAIndividual], rng: np.random.Generator, size: int) -> GAIndividual:
    draws = rng.integers(0, len(population), size=size)
    best = population[draws[0]]
    for i in draws[1:]:
        if population[i].fitness < best.fitness:
            best = population[i]
    return best


def _make_child(
    a: Config,
    b: Config,
    space: SearchSpace,
    rng: np.random.Generator,
    swap_prob: float,
    mutation_prob: float,
) -> Config:
    # gene sources first (one draw per declared parameter, active or not,
    # so the stream stays aligned across genomes)
    source: Config = {}
    for p in space.params:
        donor, other = (b, a) if rng.random() < swap_prob else (a, b)
        if p.name in donor:
            source[p.name] = donor[p.name]
        elif p.name in other:
            source[p.name] = other[p.name]
    # repair + mutate in topological order: activity follows the child's own
    # parent values; genes missing after crossover are resampled from the prior
    child: Config = {}
    for name in space.topological_order:
        if not space.is_active(name, child):
            continue
        p = space.param(name)
        v = source.get(name)
        if v is None:
            v = _draw(p, rng)
        if rng.random() < mutation_prob:
            v = _draw(p, rng)
        child[name] = v
    return child


def ga_step(
    population: list[GAIndividual],
    rng: np.random.Generator,
    space: SearchSpace,
    swap_prob: float = 0.5,
    mutation_prob: float = 0.1,
    tournament_size: int = 3,
    elitism: int = 1,
) -> list[GAIndividual]:
    """One generation: keep the best individual, fill the rest with mutated
    crossover children of tournament winners. Population size is preserved."""
    if not population:
        raise ValueError("population must be non-empty")
    if any(ind.fitness is None for ind in population):
        raise ValueError("every individual needs a fitness before stepping")
    n = len(population)
    ranked = sorted(range(n), key=lambda i: (population[i].fitness, i))
    next_pop = [
        GAIndividual(dict(population[i].genome), population[i].fitness)
        for i in ranked[: min(max(elitism, 0), n)]
    ]
    while len(next_pop) < n:
        p1 = _tournament(population, rng, tournament_size)
        p2 = _tournament(population, rng, tournament_size)
        child = _make_child(p1.genome, p2.genome, space, rng, swap_prob, mutation_prob)
        next_pop.append(GAIndividual(child, None))
    return next_pop


class GAOptimizer(Optimizer):
    name = "ga"

    def __init__(
        self,
        space,
        seed: int,
        pop_size: int = 20,
        tournament_size: int = 3,
        swap_prob: float = 0.5,
        mutation_prob: float = 0.1,
        elitism: int = 1,
    ):
        super().__init__(space, seed)
        if pop_size < 2:
            raise ValueError("population size must be at least 2")
        self.pop_size = int(pop_size)
        self.tournament_size = int(tournament_size)
        self.swap_prob = float(swap_prob)
        self.mutation_prob = float(mutation_prob)
        self.elitism = int(elitism)
        self._population: list[GAIndividual] | None = None
        self._generation = 0
        self._seeds: list[GAIndividual] = []

    def _ensure_population(self) -> None:
        if self._population is not None:
            return
        pop = [GAIndividual(dict(s.genome), s.fitness) for s in self._seeds[: self.pop_size]]
        rng = spawn_rng(self.seed, _SALT_GA_INIT)
        while len(pop) < self.pop_size:
            pop.append(GAIndividual(sample(self.space, rng), None))
        self._population = pop

    def _next_unevaluated(self, skip: int = 0) -> GAIndividual | None:
        """The skip-th unevaluated individual, or the last one if fewer exist."""
        found: GAIndividual | None = None
        for ind in self._population:
            if ind.fitness is None:
                found = ind
                if skip == 0:
                    return ind
                skip -= 1
        return found

    def _suggest(self, rng: np.random.Generator, batch_offset: int = 0) -> Config:
        self._ensure_population()
        ind = self._next_unevaluated(batch_offset)
        if ind is None:
            gen_rng = spawn_rng(self.seed, _SALT_GA_GEN, self._generation)
            self._population = ga_step(
                self._population,
                gen_rng,
                self.space,
                swap_prob=self.swap_prob,
                mutation_prob=self.mutation_prob,
                tournament_size=self.tournament_size,
                elitism=self.elitism,
            )
            self._generation += 1
            ind = self._next_unevaluated(batch_offset)
        return dict(ind.genome)

    def _on_report(self, entry: HistoryEntry) -> None:
        if self._population is None:
            # pre-population reports (warm starts) seed the first generation
            self._seeds.append(GAIndividual(dict(entry.config), entry.objective))
            return
        for ind in self._population:
            if ind.fitness is None and ind.genome == entry.config:
                ind.fitness = entry.objective
                return
