"""The population process: one fitness site per occupied level in [0, 1].

Each step is a birth with probability p, else a death.  A birth is a
mutant with probability r and founds a new site at a fresh uniform
fitness; otherwise it attaches to an existing site with probability
proportional to that site's head count (a birth into an empty population
founds a site at a uniform fitness as well).  A death removes one
individual from the lowest-fitness site, deleting the site when its count
reaches zero; a death drawn on an empty population is a hold.

The trajectory is a pure function of (params, replicate index): draws come
from a per-replicate Philox stream (see ``fitscape.rng``) in a fixed
documented order, so runs replay bit-exactly, on either kernel backend.
One step costs O(log m) amortized in the number of live sites m.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence, Union

import numpy as np

from . import backend
from ._pykernel import EV_ATTACH, EV_DEATH, EV_MUTANT
from .rng import stream_key

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Params:
    """Model parameters.

    p      per-step birth probability in (0, 1]; p = 1 is the pure-birth
           regime (the death branch never fires)
    r      mutation probability in (0, 1)
    steps  run horizon (number of transitions)
    seed   64-bit base seed; replicate streams derive from (seed, index)
    """

    p: float
    r: float
    steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must be in (0, 1], got {self.p}")
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must be in (0, 1), got {self.r}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 bits")


class Site(NamedTuple):
    fitness: float
    count: int
    birth_time: int


@dataclass(frozen=True)
class MutantBirth:
    fitness: float
    slot: int


@dataclass(frozen=True)
class AttachBirth:
    slot: int


@dataclass(frozen=True)
class Death:
    slot: int
    removed_site: bool


@dataclass(frozen=True)
class Hold:
    pass


Event = Union[MutantBirth, AttachBirth, Death, Hold]


class ObserverError(RuntimeError):
    """An observer callback raised during a run."""


class PopulationState:
    """Live configuration: sites with (fitness, count, birth_time).

    Wraps a kernel instance (compiled when available).  Sites are
    identified by their slot, a stable integer assigned at creation;
    slots of deleted sites are never reused.  A state is confined to a
    single execution context; distinct states are independent.
    """

    __slots__ = ("params", "_k")

    def __init__(self, params: Params, replicate: int = 0, _kernel=None):
        self.params = params
        if _kernel is not None:
            self._k = _kernel
        else:
            self._k = backend.PopKernel(
                params.p, params.r, stream_key(params.seed, replicate))

    @classmethod
    def from_sites(cls, params: Params,
                   sites: Iterable[tuple[float, int] | tuple[float, int, int]],
                   replicate: int = 0) -> "PopulationState":
        """State with a prescribed site list (for tests and bridging).

        Each entry is (fitness, count) or (fitness, count, birth_time).
        An empty iterable gives the empty population.
        """
        fits, counts, births = [], [], []
        for entry in sites:
            fits.append(entry[0])
            counts.append(entry[1])
            births.append(entry[2] if len(entry) > 2 else 0)
        kernel = backend.PopKernel(
            params.p, params.r, stream_key(params.seed, replicate),
            fits, counts, births)
        return cls(params, _kernel=kernel)

    # -- views ---------------------------------------------------------------

    @property
    def total(self) -> int:
        return self._k.total

    @property
    def step(self) -> int:
        return self._k.nstep

    @property
    def num_sites(self) -> int:
        return self._k.nlive

    def sites(self) -> list[Site]:
        _, f, c, b = self._k.snapshot()
        return [Site(float(x), int(k), int(t)) for x, k, t in zip(f, c, b)]

    def snapshot(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(slots, fitness, counts, birth_times) arrays of live sites."""
        return self._k.snapshot()

    def site(self, slot: int) -> Site:
        f, c, b = self._k.site_tuple(slot)
        return Site(float(f), int(c), int(b))

    def count_of(self, slot: int) -> int:
        return self._k.count_of(slot)

    def fitness_of(self, slot: int) -> float:
        return self._k.fitness_of(slot)

    def min_fitness(self) -> float:
        return self._k.min_fitness()

    def left_count(self, f: float) -> int:
        """Individuals at sites with fitness <= f."""
        return self._k.left_count(f)

    def check_consistency(self) -> None:
        self._k.check_consistency()


def new_population(params: Params, replicate: int = 0) -> PopulationState:
    """Initial configuration: one individual at fitness 0, time 0."""
    return PopulationState(params, replicate)


def sample_attachment(state: PopulationState, u: float) -> int:
    """Slot of the site whose cumulative count interval contains u*total.

    Sites are scanned in slot (creation) order; a site holding k of the N
    individuals is selected with probability exactly k/N for uniform u.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError("u must be in [0, 1)")
    return state._k.sample_attachment_u(u)


def least_fit(state: PopulationState) -> int:
    """Slot of the minimum-fitness live site."""
    return state._k.least_fit_slot()


def _wrap_event(raw) -> Event:
    kind, slot, fitness, removed = raw
    if kind == EV_MUTANT:
        return MutantBirth(fitness=fitness, slot=slot)
    if kind == EV_ATTACH:
        return AttachBirth(slot=slot)
    if kind == EV_DEATH:
        return Death(slot=slot, removed_site=removed)
    return Hold()


def step(state: PopulationState,
         rand: Callable[[], float] | None = None) -> Event:
    """Advance one transition and report what happened.

    ``rand`` optionally overrides the state's own stream with an explicit
    draw source (a zero-argument callable returning floats in [0, 1));
    when given, it supplies every draw of the step, in the documented
    order.  Leaving it unset keeps the replayable seeded trajectory.
    """
    return _wrap_event(state._k.advance(rand))


def run(params: Params,
        observers: Sequence[Callable[[int, PopulationState, Event], None]] = (),
        replicate: int = 0,
        burn_in: int = 0) -> PopulationState:
    """Run ``params.steps`` transitions from the initial configuration.

    Observers are called after every step as observer(step_index, state,
    event); they must not mutate the state.  ``burn_in`` extra steps are
    executed before the observed horizon (default 0, i.e. the canonical
    single-founder start).  The trajectory depends only on (params,
    replicate, burn_in), never on the observer list.
    """
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    state = new_population(params, replicate)
    kernel = state._k
    if burn_in:
        kernel.run(burn_in)
    if not observers:
        kernel.run(params.steps)
        return state
    for _ in range(params.steps):
        event = _wrap_event(kernel.advance(None))
        n = kernel.nstep
        for obs in observers:
            try:
                obs(n, state, event)
            except Exception as exc:
                raise ObserverError(
                    f"observer {obs!r} failed at step {n}: {exc}") from exc
    return state


# -- serialization ------------------------------------------------------------

SITES_HEADER = ["fitness", "count", "birth_time"]


def write_sites_csv(state: PopulationState, path) -> None:
    """Final-snapshot schema: one row per live site, fitness ascending.

    Fitness is printed with 17 significant digits and round-trips exactly.
    """
    _, f, c, b = state.snapshot()
    order = np.argsort(f, kind="stable")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SITES_HEADER)
        for i in order:
            w.writerow([format(float(f[i]), ".17g"), int(c[i]), int(b[i])])


def read_sites_csv(path) -> list[Site]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != SITES_HEADER:
            raise ValueError(f"unexpected sites header: {header}")
        return [Site(float(a), int(b), int(c)) for a, b, c in rd]
