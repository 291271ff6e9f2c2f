"""Companion Markov chains used to analyze the population process.

Three families live here:

* the exact mass-split chain (L, R): individuals at sites with fitness
  <= f versus > f, whose interior left/right birth weights are the
  attachment shares L/N and R/N;
* the homogenized split chain, where the interior attachment share is
  frozen at a constant epsilon.  Driving every epsilon in a grid with one
  shared uniform per step couples the family monotonically: the left
  interval [0, a(eps)) grows with epsilon while the death interval [p, 1)
  is shared, so left counts are nested upward and right counts downward;
* the uniform-attachment baseline variant (``bas``): its 1-D site-count
  walk, the 2-D split pair, and a full population simulation with
  uniform-site attachment and whole-site removal at the minimum.

All steppers are inverse-transform samplers over a fixed, documented
interval order (left move, right move, hold where present, down move);
changing the order is a replay-breaking change.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace

from .core import Params
from .rng import UniformSource, stream_key
from .stats import SizeHistogram
from .theory import critical_fitness


@dataclass(frozen=True)
class LRState:
    """Split-population state: left/right head counts at a split fitness."""

    left: int
    right: int
    f: float

    def __post_init__(self):
        if self.left < 0 or self.right < 0:
            raise ValueError("counts must be nonnegative")
        if not 0.0 < self.f <= 1.0:
            raise ValueError("split fitness must be in (0, 1]")


def _left_birth_prob(left: int, right: int, eps: float,
                     f: float, p: float, r: float) -> float:
    """Mass of the left-move interval [0, a) in the shared layout."""
    if left == 0 and right == 0:
        return f * p
    if left == 0:
        return f * p * r
    if right == 0:
        return f * p * r + p * (1.0 - r)
    return f * p * r + p * (1.0 - r) * eps


def _split_probs(state: LRState, eps: float, params: Params):
    p, f = params.p, state.f
    L, R = state.left, state.right
    a = _left_birth_prob(L, R, eps, f, p, params.r)
    if L == 0 and R == 0:
        down = LRState(0, 0, f)  # death on empty is a hold
    elif L == 0:
        down = LRState(0, R - 1, f)
    else:
        down = LRState(L - 1, R, f)
    return [
        (LRState(L + 1, R, f), a),
        (LRState(L, R + 1, f), p - a),
        (down, 1.0 - p),
    ]


def lr_probs(state: LRState, params: Params):
    """Exact one-step support and probabilities of the mass-split chain.

    In the interior the left birth weight is f p r + p(1-r) L/N; boundary
    rows and the empty state follow their own kernels.  Probabilities sum
    to 1 by construction.
    """
    N = state.left + state.right
    eps = state.left / N if (state.left > 0 and state.right > 0) else 0.0
    return _split_probs(state, eps, params)


def eps_probs(state: LRState, eps: float, params: Params):
    """Kernel of the homogenized chain: interior left weight fpr + p(1-r)eps."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    return _split_probs(state, eps, params)


def _inverse_transform(probs, u: float):
    cum = 0.0
    for nxt, w in probs:
        cum += w
        if u < cum:
            return nxt
    return probs[-1][0]  # u at the top edge of the last interval


def lr_step(state: LRState, params: Params, u: float) -> LRState:
    """One inverse-transform move (left, right, down interval order)."""
    if not 0.0 <= u < 1.0:
        raise ValueError("u must be in [0, 1)")
    return _inverse_transform(lr_probs(state, params), u)


def eps_step(state: LRState, eps: float, params: Params, u: float) -> LRState:
    if not 0.0 <= u < 1.0:
        raise ValueError("u must be in [0, 1)")
    return _inverse_transform(eps_probs(state, eps, params), u)


@dataclass(frozen=True)
class EpsilonFamily:
    """Coupled homogenized chains, one per epsilon on an ascending grid."""

    grid: tuple[float, ...]
    states: tuple[LRState, ...]
    params: Params

    @classmethod
    def start(cls, grid, f: float, params: Params) -> "EpsilonFamily":
        grid = tuple(float(e) for e in grid)
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ValueError("epsilon grid must be ascending")
        if not all(0.0 <= e <= 1.0 for e in grid):
            raise ValueError("epsilon values must be in [0, 1]")
        return cls(grid, tuple(LRState(0, 0, f) for _ in grid), params)

    def ordered(self) -> bool:
        """Componentwise ordering across the grid (the coupling invariant)."""
        pairs = zip(self.states, self.states[1:])
        return all(a.left <= b.left and a.right >= b.right for a, b in pairs)


def eps_coupled_step(family: EpsilonFamily, u: float) -> EpsilonFamily:
    """Advance every chain of the family with the same uniform.

    The shared layout is [0, a(eps)) left move, [a(eps), p) right move,
    [p, 1) death; a(eps) is nondecreasing in epsilon, which preserves the
    family ordering pathwise.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError("u must be in [0, 1)")
    states = tuple(eps_step(s, e, family.params, u)
                   for s, e in zip(family.states, family.grid))
    return replace(family, states=states)


# -- uniform-attachment baseline variant ---------------------------------------

@dataclass(frozen=True)
class BasState:
    """Split site counts of the baseline variant (sites, not individuals)."""

    left_sites: int
    right_sites: int
    f: float

    def __post_init__(self):
        if self.left_sites < 0 or self.right_sites < 0:
            raise ValueError("counts must be nonnegative")
        if not 0.0 < self.f < 1.0:
            raise ValueError("split fitness must be in (0, 1)")


def bas1_probs(s: int, params: Params):
    """1-D site-count walk: +1 w.p. pr, hold w.p. p(1-r), -1 w.p. 1-p,
    reflected at 0 (the down move from 0 stays at 0)."""
    p, r = params.p, params.r
    return [
        (s + 1, p * r),
        (s, p * (1.0 - r)),
        (max(s - 1, 0), 1.0 - p),
    ]


def bas1_step(s: int, params: Params, u: float) -> int:
    if not 0.0 <= u < 1.0:
        raise ValueError("u must be in [0, 1)")
    cum = 0.0
    for nxt, w in bas1_probs(s, params):
        cum += w
        if u < cum:
            return nxt
    return max(s - 1, 0)


def bas_probs(state: BasState, params: Params):
    """Exact kernel of the 2-D split site-count pair.

    From (0, 0) a birth founds a site on either side (mass fp / (1-f)p)
    and a death is a hold; elsewhere mutants add a site left or right
    (fpr / (1-f)pr), non-mutant births hold the pair (mass p(1-r)), and a
    death removes the lowest site (left side first).
    """
    p, r, f = params.p, params.r, state.f
    L, R = state.left_sites, state.right_sites
    if L == 0 and R == 0:
        return [
            (BasState(1, 0, f), f * p),
            (BasState(0, 1, f), (1.0 - f) * p),
            (BasState(0, 0, f), 1.0 - p),
        ]
    down = BasState(L - 1, R, f) if L > 0 else BasState(0, R - 1, f)
    return [
        (BasState(L + 1, R, f), f * p * r),
        (BasState(L, R + 1, f), (1.0 - f) * p * r),
        (BasState(L, R, f), p * (1.0 - r)),
        (down, 1.0 - p),
    ]


def bas_step(state: BasState, params: Params, u: float) -> BasState:
    """Inverse transform over (left, right, hold, down) interval order."""
    if not 0.0 <= u < 1.0:
        raise ValueError("u must be in [0, 1)")
    return _inverse_transform(bas_probs(state, params), u)


def bas_full_simulate(params: Params, replicate: int = 0,
                      window_low: float | None = None) -> SizeHistogram:
    """Full baseline-variant population run; site-size histogram at the end.

    Births attach to a uniformly chosen live site (not individual) when
    non-mutant; a death removes the entire lowest-fitness site.  The draw
    order per step matches the main model (branch, mutant test, fitness
    or site selector), and the same initial condition (one individual at
    fitness 0) is used.  The histogram is restricted to sites with
    fitness above ``window_low`` (default: the critical fitness, clamped
    to 0 when it is not below 1).
    """
    if window_low is None:
        fc = critical_fitness(params.p, params.r)
        window_low = fc if fc < 1.0 else 0.0
    src = UniformSource(stream_key(params.seed, replicate))
    p, r = params.p, params.r
    fit = [0.0]
    cnt = [1]
    heap = [(0.0, 0)]
    live = [0]                       # slots, swap-removed on site death
    pos = {0: 0}                     # slot -> index in live
    fitness_set = {0.0}
    for _ in range(params.steps):
        u1 = src()
        if u1 < p:
            u2 = src()
            if u2 < r or not live:
                g = src()
                while g in fitness_set:
                    g = src()
                slot = len(fit)
                fit.append(g)
                cnt.append(1)
                heapq.heappush(heap, (g, slot))
                pos[slot] = len(live)
                live.append(slot)
                fitness_set.add(g)
            else:
                u3 = src()
                slot = live[int(u3 * len(live))]
                cnt[slot] += 1
        elif live:
            g, slot = heap[0]
            heapq.heappop(heap)
            cnt[slot] = 0
            fitness_set.discard(g)
            i = pos.pop(slot)
            last = live.pop()
            if i < len(live):
                live[i] = last
                pos[last] = i
    counts: dict[int, int] = {}
    for slot in live:
        if fit[slot] > window_low:
            k = cnt[slot]
            counts[k] = counts.get(k, 0) + 1
    return SizeHistogram(counts, window=(window_low, 1.0))


# -- projection from the full process ------------------------------------------

def project_lr(state, f: float) -> LRState:
    """Split a population state at fitness f: left counts sites <= f.

    f = 1 is admitted as the degenerate all-mass-left split.
    """
    if not 0.0 < f <= 1.0:
        raise ValueError("split fitness must be in (0, 1]")
    left = state.left_count(f)
    return LRState(left, state.total - left, f)
