"""Pure-Python population kernel.

Semantics are shared with the compiled kernel in ``fitscape._speedups``;
the two must stay draw-for-draw identical so a trajectory replays
bit-exactly on either backend.

State layout is append-only: every site ever created keeps its slot, and
a site whose count reaches zero becomes a tombstone (count 0) that is
never selected again.  A Fenwick tree over per-slot counts serves the
weighted attachment draw in O(log m); a binary heap of (fitness, slot)
serves least-fit lookup.  Deaths only ever touch the heap top (the
minimum is decremented until it disappears), so the heap needs no lazy
cleanup.  Live fitness values are additionally kept in a set to enforce
distinctness of freshly drawn mutant positions.

Draw discipline per step (fixed; changing it breaks replay):

  u1          branch: u1 < p -> birth, otherwise death (hold on empty)
  birth:  u2  mutant test (u2 < r; a birth into an empty population is
              forced onto the new-site path regardless of u2)
          u3  new-site fitness (mutant path; redrawn on the ~impossible
              float collision) or attachment selector (non-mutant path)
  death consumes no draw beyond u1.
"""

from __future__ import annotations

import heapq

import numpy as np

from .rng import UniformSource

# event kind codes shared with the compiled kernel
EV_MUTANT = 0
EV_ATTACH = 1
EV_DEATH = 2
EV_HOLD = 3

_NAN = float("nan")


class PopKernel:
    """Mutable state of one population trajectory."""

    __slots__ = (
        "p", "r", "total", "nlive", "nstep", "fit", "cnt", "birth",
        "fen", "fcap", "heap", "live", "_src",
    )

    def __init__(self, p, r, key, fits=None, counts=None, births=None):
        self.p = float(p)
        self.r = float(r)
        self._src = UniformSource(key)
        self.fit: list[float] = []
        self.cnt: list[int] = []
        self.birth: list[int] = []
        self.heap: list[tuple[float, int]] = []
        self.live: set[float] = set()
        self.fcap = 8
        self.fen = [0] * (self.fcap + 1)
        self.total = 0
        self.nlive = 0
        self.nstep = 0
        if fits is None:
            fits, counts, births = [0.0], [1], [0]
        for g, c, b in zip(fits, counts, births):
            g = float(g)
            c = int(c)
            if c < 1:
                raise ValueError("site counts must be >= 1")
            if g in self.live:
                raise ValueError("site fitness values must be distinct")
            slot = len(self.fit)
            if slot == self.fcap:
                self._fen_grow()  # rebuild must not see the new slot yet
            self.fit.append(g)
            self.cnt.append(c)
            self.birth.append(int(b))
            self._fen_add(slot, c)
            heapq.heappush(self.heap, (g, slot))
            self.live.add(g)
            self.nlive += 1
            self.total += c

    # -- Fenwick tree over per-slot counts ---------------------------------

    def _fen_add(self, slot, delta):
        fen = self.fen
        i = slot + 1
        n = self.fcap
        while i <= n:
            fen[i] += delta
            i += i & (-i)

    def _fen_find(self, target):
        # largest prefix with cumulative sum <= target; the answer slot is
        # the first one whose cumulative count strictly exceeds target
        fen = self.fen
        pos = 0
        bit = self.fcap
        rem = target
        while bit:
            nxt = pos + bit
            if nxt <= self.fcap and fen[nxt] <= rem:
                rem -= fen[nxt]
                pos = nxt
            bit >>= 1
        return pos

    def _fen_grow(self):
        self.fcap *= 2
        fen = [0] * (self.fcap + 1)
        cnt = self.cnt
        for i in range(len(cnt)):
            fen[i + 1] = cnt[i]
        for i in range(1, self.fcap + 1):
            j = i + (i & (-i))
            if j <= self.fcap:
                fen[j] += fen[i]
        self.fen = fen

    # -- stepping -----------------------------------------------------------

    def _new_site(self, g):
        slot = len(self.fit)
        if slot == self.fcap:
            self._fen_grow()  # rebuild must not see the new slot yet
        self.fit.append(g)
        self.cnt.append(1)
        self.birth.append(self.nstep)
        self._fen_add(slot, 1)
        heapq.heappush(self.heap, (g, slot))
        self.live.add(g)
        self.nlive += 1
        self.total += 1
        return slot

    def advance(self, draw=None):
        """One transition; returns (kind, slot, fitness, removed)."""
        nd = self._src if draw is None else draw
        self.nstep += 1
        u1 = nd()
        if u1 < self.p:
            u2 = nd()
            if u2 < self.r or self.total == 0:
                g = nd()
                while g in self.live:
                    g = nd()
                slot = self._new_site(g)
                return (EV_MUTANT, slot, g, False)
            u3 = nd()
            slot = self._fen_find(u3 * self.total)
            self.cnt[slot] += 1
            self._fen_add(slot, 1)
            self.total += 1
            return (EV_ATTACH, slot, self.fit[slot], False)
        if self.total == 0:
            return (EV_HOLD, -1, _NAN, False)
        slot = self.heap[0][1]
        c = self.cnt[slot] - 1
        self.cnt[slot] = c
        self._fen_add(slot, -1)
        self.total -= 1
        if c == 0:
            heapq.heappop(self.heap)
            self.live.discard(self.fit[slot])
            self.nlive -= 1
            return (EV_DEATH, slot, self.fit[slot], True)
        return (EV_DEATH, slot, self.fit[slot], False)

    def run(self, nsteps):
        advance = self.advance
        for _ in range(nsteps):
            advance()

    def run_sampled(self, nsteps, every, split_f):
        """Advance ``nsteps`` recording (n, N, S, L, R, min_fitness) rows.

        A row is written on entry and then after every step whose index is
        a multiple of ``every``.  L counts individuals at fitness <= split_f
        and is maintained incrementally from events.
        """
        if every < 1:
            raise ValueError("sample cadence must be >= 1")
        f = float(split_f)
        lcount = self.left_count(f)
        ns, Ns, Ss, Ls, mins = [], [], [], [], []

        def record():
            ns.append(self.nstep)
            Ns.append(self.total)
            Ss.append(self.nlive)
            Ls.append(lcount)
            mins.append(self.heap[0][0] if self.nlive else _NAN)

        record()
        advance = self.advance
        for _ in range(nsteps):
            kind, _slot, g, _removed = advance()
            if kind <= EV_ATTACH:
                if g <= f:
                    lcount += 1
            elif kind == EV_DEATH:
                if g <= f:
                    lcount -= 1
            if self.nstep % every == 0:
                record()
        n_arr = np.asarray(ns, dtype=np.int64)
        nt = np.asarray(Ns, dtype=np.int64)
        return (n_arr, nt, np.asarray(Ss, dtype=np.int64),
                np.asarray(Ls, dtype=np.int64),
                nt - np.asarray(Ls, dtype=np.int64),
                np.asarray(mins, dtype=np.float64))

    # -- queries ------------------------------------------------------------

    def sample_attachment_u(self, u):
        if self.total == 0:
            raise ValueError("attachment on empty population")
        slot = self._fen_find(u * self.total)
        while self.cnt[slot] == 0:  # unreachable except at fp edges
            slot -= 1
        return slot

    def least_fit_slot(self):
        if self.total == 0:
            raise ValueError("least_fit on empty population")
        return self.heap[0][1]

    def min_fitness(self):
        if self.total == 0:
            raise ValueError("least_fit on empty population")
        return self.heap[0][0]

    def left_count(self, f):
        cnt = self.cnt
        fit = self.fit
        return sum(cnt[i] for i in range(len(cnt)) if cnt[i] > 0 and fit[i] <= f)

    def live_slots(self):
        cnt = self.cnt
        return [i for i in range(len(cnt)) if cnt[i] > 0]

    def snapshot(self):
        """(slots, fitness, counts, birth_times) of live sites, slot order."""
        slots = self.live_slots()
        idx = np.asarray(slots, dtype=np.int64)
        return (idx,
                np.asarray([self.fit[i] for i in slots], dtype=np.float64),
                np.asarray([self.cnt[i] for i in slots], dtype=np.int64),
                np.asarray([self.birth[i] for i in slots], dtype=np.int64))

    def site_tuple(self, slot):
        return (self.fit[slot], self.cnt[slot], self.birth[slot])

    def count_of(self, slot):
        return self.cnt[slot]

    def fitness_of(self, slot):
        return self.fit[slot]

    def check_consistency(self):
        """Internal-index audit used by tests; raises AssertionError."""
        live_counts = [c for c in self.cnt if c > 0]
        assert self.total == sum(live_counts)
        assert self.nlive == len(live_counts)
        assert self.nlive == len(self.live) == len(self.heap)
        cum = 0
        for i, c in enumerate(self.cnt):
            cum += c
            got = self.fen
            j = i + 1
            s = 0
            while j > 0:
                s += got[j]
                j -= j & (-j)
            assert s == cum
        if self.nlive:
            top_f, top_s = self.heap[0]
            assert self.cnt[top_s] > 0
            assert top_f == min(self.fit[i] for i in self.live_slots())
        fits = [self.fit[i] for i in self.live_slots()]
        assert len(set(fits)) == len(fits)
        assert set(fits) == self.live


def run_coupled(eps_grid, f, p, r, nsteps, key, coupled=True):
    """Drive one comparison chain per epsilon from (0, 0) for ``nsteps``.

    All chains share each step's uniform when ``coupled`` (the interval
    layout makes left-moves nested across epsilon); ``coupled=False`` uses
    an independent uniform per chain and serves as a negative control.

    Returns ``(first_violation_step, left, right)`` where the step is -1
    when componentwise ordering in epsilon held throughout.
    """
    eps = [float(e) for e in eps_grid]
    ne = len(eps)
    src = UniformSource(key)
    L = [0] * ne
    R = [0] * ne
    pr_f = f * p * r
    p1r = p * (1.0 - r)
    fp = f * p
    violation = -1
    for step in range(1, nsteps + 1):
        u = src()
        for i in range(ne):
            ui = u if coupled else (u if i == 0 else src())
            li = L[i]
            ri = R[i]
            if li == 0 and ri == 0:
                a = fp
            elif li == 0:
                a = pr_f
            elif ri == 0:
                a = pr_f + p1r
            else:
                a = pr_f + p1r * eps[i]
            if ui < a:
                L[i] = li + 1
            elif ui < p:
                R[i] = ri + 1
            elif li > 0:
                L[i] = li - 1
            elif ri > 0:
                R[i] = ri - 1
        for i in range(ne - 1):
            if L[i] > L[i + 1] or R[i] < R[i + 1]:
                return (step, L, R)
    return (violation, L, R)
