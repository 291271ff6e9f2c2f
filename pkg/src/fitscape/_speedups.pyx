# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled population kernel.

Mirrors ``fitscape._pykernel`` draw for draw: same data structures
(append-only slots with tombstones, Fenwick tree for weighted attachment,
binary heap for least-fit lookup, set of live fitness values) and the same
per-step draw discipline, so a trajectory replays bit-exactly on either
backend.  Raw uniforms come straight from the Philox bit generator's
``next_double``.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport NAN
from libc.stdlib cimport free, malloc, realloc

import numpy as np

from numpy.random cimport bitgen_t

from .rng import make_bitgen

cdef const char *_CAPSULE = "BitGenerator"

EV_MUTANT = 0
EV_ATTACH = 1
EV_DEATH = 2
EV_HOLD = 3


cdef struct StepOut:
    int kind
    long long slot
    double fitness
    int removed


cdef class PopKernel:
    """Mutable state of one population trajectory (compiled backend)."""

    cdef readonly double p
    cdef readonly double r
    cdef readonly long long total
    cdef readonly long long nlive
    cdef readonly long long nstep
    cdef object _bitgen_obj
    cdef bitgen_t *_rng
    cdef double *fit
    cdef long long *cnt
    cdef long long *birth
    cdef long long nslots
    cdef long long cap
    cdef long long *fen
    cdef long long fcap
    cdef double *hfit
    cdef long long *hslot
    cdef long long hsize
    cdef long long hcap
    cdef set live

    def __cinit__(self, p, r, key, fits=None, counts=None, births=None):
        self.p = float(p)
        self.r = float(r)
        self._bitgen_obj = make_bitgen(key)
        capsule = self._bitgen_obj.capsule
        if not PyCapsule_IsValid(capsule, _CAPSULE):
            raise ValueError("invalid BitGenerator capsule")
        self._rng = <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE)

        self.cap = 16
        self.fit = <double *> malloc(self.cap * sizeof(double))
        self.cnt = <long long *> malloc(self.cap * sizeof(long long))
        self.birth = <long long *> malloc(self.cap * sizeof(long long))
        self.fcap = 8
        self.fen = <long long *> malloc((self.fcap + 1) * sizeof(long long))
        self.hcap = 16
        self.hfit = <double *> malloc(self.hcap * sizeof(double))
        self.hslot = <long long *> malloc(self.hcap * sizeof(long long))
        if (self.fit == NULL or self.cnt == NULL or self.birth == NULL
                or self.fen == NULL or self.hfit == NULL or self.hslot == NULL):
            raise MemoryError()
        cdef long long i
        for i in range(self.fcap + 1):
            self.fen[i] = 0
        self.nslots = 0
        self.hsize = 0
        self.total = 0
        self.nlive = 0
        self.nstep = 0
        self.live = set()

        if fits is None:
            fits, counts, births = [0.0], [1], [0]
        cdef double g
        cdef long long c, slot
        for gf, cc, bb in zip(fits, counts, births):
            g = float(gf)
            c = int(cc)
            if c < 1:
                raise ValueError("site counts must be >= 1")
            if g in self.live:
                raise ValueError("site fitness values must be distinct")
            slot = self._append_slot(g, c, int(bb))
            self._fen_add(slot, c)
            self._hpush(g, slot)
            self.live.add(g)
            self.nlive += 1
            self.total += c

    def __dealloc__(self):
        if self.fit != NULL:
            free(self.fit)
        if self.cnt != NULL:
            free(self.cnt)
        if self.birth != NULL:
            free(self.birth)
        if self.fen != NULL:
            free(self.fen)
        if self.hfit != NULL:
            free(self.hfit)
        if self.hslot != NULL:
            free(self.hslot)

    # -- storage ------------------------------------------------------------

    cdef long long _append_slot(self, double g, long long c, long long b) except -1:
        cdef long long slot = self.nslots
        cdef long long newcap
        if slot == self.cap:
            newcap = self.cap * 2
            self.fit = <double *> realloc(self.fit, newcap * sizeof(double))
            self.cnt = <long long *> realloc(self.cnt, newcap * sizeof(long long))
            self.birth = <long long *> realloc(self.birth, newcap * sizeof(long long))
            if self.fit == NULL or self.cnt == NULL or self.birth == NULL:
                raise MemoryError()
            self.cap = newcap
        if slot == self.fcap:
            self._fen_grow()
        self.fit[slot] = g
        self.cnt[slot] = c
        self.birth[slot] = b
        self.nslots += 1
        return slot

    cdef int _fen_grow(self) except -1:
        cdef long long newcap = self.fcap * 2
        cdef long long *fen = <long long *> realloc(
            self.fen, (newcap + 1) * sizeof(long long))
        if fen == NULL:
            raise MemoryError()
        self.fen = fen
        self.fcap = newcap
        cdef long long i, j
        for i in range(newcap + 1):
            fen[i] = 0
        for i in range(self.nslots):
            fen[i + 1] = self.cnt[i]
        for i in range(1, newcap + 1):
            j = i + (i & (-i))
            if j <= newcap:
                fen[j] += fen[i]
        return 0

    cdef void _fen_add(self, long long slot, long long delta) noexcept:
        cdef long long i = slot + 1
        while i <= self.fcap:
            self.fen[i] += delta
            i += i & (-i)

    cdef long long _fen_find(self, double target) noexcept:
        # first slot whose cumulative count strictly exceeds target
        cdef long long pos = 0
        cdef long long bit = self.fcap
        cdef long long nxt
        cdef double rem = target
        while bit:
            nxt = pos + bit
            if nxt <= self.fcap and self.fen[nxt] <= rem:
                rem -= self.fen[nxt]
                pos = nxt
            bit >>= 1
        return pos

    cdef long long _fen_prefix(self, long long slot) noexcept:
        cdef long long i = slot + 1
        cdef long long s = 0
        while i > 0:
            s += self.fen[i]
            i -= i & (-i)
        return s

    cdef int _hpush(self, double f, long long s) except -1:
        cdef long long i, parent
        if self.hsize == self.hcap:
            self.hcap *= 2
            self.hfit = <double *> realloc(self.hfit, self.hcap * sizeof(double))
            self.hslot = <long long *> realloc(self.hslot, self.hcap * sizeof(long long))
            if self.hfit == NULL or self.hslot == NULL:
                raise MemoryError()
        i = self.hsize
        self.hsize += 1
        while i > 0:
            parent = (i - 1) >> 1
            if self.hfit[parent] <= f:
                break
            self.hfit[i] = self.hfit[parent]
            self.hslot[i] = self.hslot[parent]
            i = parent
        self.hfit[i] = f
        self.hslot[i] = s
        return 0

    cdef void _hpop(self) noexcept:
        cdef long long n = self.hsize - 1
        self.hsize = n
        if n == 0:
            return
        cdef double f = self.hfit[n]
        cdef long long s = self.hslot[n]
        cdef long long i = 0, child
        while True:
            child = 2 * i + 1
            if child >= n:
                break
            if child + 1 < n and self.hfit[child + 1] < self.hfit[child]:
                child += 1
            if self.hfit[child] >= f:
                break
            self.hfit[i] = self.hfit[child]
            self.hslot[i] = self.hslot[child]
            i = child
        self.hfit[i] = f
        self.hslot[i] = s

    # -- stepping -----------------------------------------------------------

    cdef inline double _draw(self, object draw):
        if draw is None:
            return self._rng.next_double(self._rng.state)
        return <double> draw()

    cdef StepOut _advance(self, object draw):
        cdef StepOut out
        cdef double u1, u2, g
        cdef long long slot, c
        self.nstep += 1
        u1 = self._draw(draw)
        if u1 < self.p:
            u2 = self._draw(draw)
            if u2 < self.r or self.total == 0:
                g = self._draw(draw)
                while g in self.live:
                    g = self._draw(draw)
                slot = self._append_slot(g, 1, self.nstep)
                self._fen_add(slot, 1)
                self._hpush(g, slot)
                self.live.add(g)
                self.nlive += 1
                self.total += 1
                out.kind = EV_MUTANT
                out.slot = slot
                out.fitness = g
                out.removed = 0
                return out
            u2 = self._draw(draw)
            slot = self._fen_find(u2 * self.total)
            self.cnt[slot] += 1
            self._fen_add(slot, 1)
            self.total += 1
            out.kind = EV_ATTACH
            out.slot = slot
            out.fitness = self.fit[slot]
            out.removed = 0
            return out
        if self.total == 0:
            out.kind = EV_HOLD
            out.slot = -1
            out.fitness = NAN
            out.removed = 0
            return out
        slot = self.hslot[0]
        c = self.cnt[slot] - 1
        self.cnt[slot] = c
        self._fen_add(slot, -1)
        self.total -= 1
        out.kind = EV_DEATH
        out.slot = slot
        out.fitness = self.fit[slot]
        if c == 0:
            self._hpop()
            self.live.discard(self.fit[slot])
            self.nlive -= 1
            out.removed = 1
        else:
            out.removed = 0
        return out

    def advance(self, draw=None):
        """One transition; returns (kind, slot, fitness, removed)."""
        cdef StepOut o = self._advance(draw)
        return (o.kind, o.slot, o.fitness, o.removed != 0)

    def run(self, long long nsteps):
        cdef long long i
        for i in range(nsteps):
            self._advance(None)

    def run_sampled(self, long long nsteps, long long every, double split_f):
        """Advance ``nsteps`` recording (n, N, S, L, R, min_fitness) rows.

        A row is written on entry and then after every step whose index is
        a multiple of ``every``; L counts individuals at fitness <= split_f.
        """
        if every < 1:
            raise ValueError("sample cadence must be >= 1")
        cdef long long start = self.nstep
        cdef long long nrec = 1 + (start + nsteps) // every - start // every
        n_arr = np.empty(nrec, dtype=np.int64)
        nt_arr = np.empty(nrec, dtype=np.int64)
        s_arr = np.empty(nrec, dtype=np.int64)
        l_arr = np.empty(nrec, dtype=np.int64)
        m_arr = np.empty(nrec, dtype=np.float64)
        cdef long long[::1] nv = n_arr
        cdef long long[::1] Nv = nt_arr
        cdef long long[::1] Sv = s_arr
        cdef long long[::1] Lv = l_arr
        cdef double[::1] mv = m_arr
        cdef long long lcount = self._left_count(split_f)
        cdef long long k = 0
        cdef long long i
        cdef StepOut o

        nv[k] = self.nstep
        Nv[k] = self.total
        Sv[k] = self.nlive
        Lv[k] = lcount
        mv[k] = self.hfit[0] if self.hsize > 0 else NAN
        k += 1
        for i in range(nsteps):
            o = self._advance(None)
            if o.kind <= EV_ATTACH:
                if o.fitness <= split_f:
                    lcount += 1
            elif o.kind == EV_DEATH:
                if o.fitness <= split_f:
                    lcount -= 1
            if self.nstep % every == 0:
                nv[k] = self.nstep
                Nv[k] = self.total
                Sv[k] = self.nlive
                Lv[k] = lcount
                mv[k] = self.hfit[0] if self.hsize > 0 else NAN
                k += 1
        return (n_arr, nt_arr, s_arr, l_arr, nt_arr - l_arr, m_arr)

    # -- queries ------------------------------------------------------------

    cdef long long _left_count(self, double f) noexcept:
        cdef long long i, s = 0
        for i in range(self.nslots):
            if self.cnt[i] > 0 and self.fit[i] <= f:
                s += self.cnt[i]
        return s

    def sample_attachment_u(self, double u):
        if self.total == 0:
            raise ValueError("attachment on empty population")
        cdef long long slot = self._fen_find(u * self.total)
        while self.cnt[slot] == 0:  # unreachable except at fp edges
            slot -= 1
        return slot

    def least_fit_slot(self):
        if self.total == 0:
            raise ValueError("least_fit on empty population")
        return self.hslot[0]

    def min_fitness(self):
        if self.total == 0:
            raise ValueError("least_fit on empty population")
        return self.hfit[0]

    def left_count(self, double f):
        return self._left_count(f)

    def live_slots(self):
        cdef long long i
        return [i for i in range(self.nslots) if self.cnt[i] > 0]

    def snapshot(self):
        """(slots, fitness, counts, birth_times) of live sites, slot order."""
        slots = self.live_slots()
        cdef long long n = len(slots)
        idx = np.asarray(slots, dtype=np.int64)
        f_arr = np.empty(n, dtype=np.float64)
        c_arr = np.empty(n, dtype=np.int64)
        b_arr = np.empty(n, dtype=np.int64)
        cdef double[::1] fv = f_arr
        cdef long long[::1] cv = c_arr
        cdef long long[::1] bv = b_arr
        cdef long long[::1] iv = idx
        cdef long long i, s
        for i in range(n):
            s = iv[i]
            fv[i] = self.fit[s]
            cv[i] = self.cnt[s]
            bv[i] = self.birth[s]
        return (idx, f_arr, c_arr, b_arr)

    def site_tuple(self, long long slot):
        if slot < 0 or slot >= self.nslots:
            raise IndexError("no such slot")
        return (self.fit[slot], self.cnt[slot], self.birth[slot])

    def count_of(self, long long slot):
        if slot < 0 or slot >= self.nslots:
            raise IndexError("no such slot")
        return self.cnt[slot]

    def fitness_of(self, long long slot):
        if slot < 0 or slot >= self.nslots:
            raise IndexError("no such slot")
        return self.fit[slot]

    def check_consistency(self):
        """Internal-index audit used by tests; raises AssertionError."""
        cdef long long i, cum = 0, live_total = 0, live_n = 0
        fits = []
        for i in range(self.nslots):
            cum += self.cnt[i]
            assert self._fen_prefix(i) == cum
            if self.cnt[i] > 0:
                live_total += self.cnt[i]
                live_n += 1
                fits.append(self.fit[i])
        assert self.total == live_total
        assert self.nlive == live_n
        assert self.nlive == len(self.live) == self.hsize
        if self.nlive:
            assert self.cnt[self.hslot[0]] > 0
            assert self.hfit[0] == min(fits)
        assert len(set(fits)) == len(fits)
        assert set(fits) == self.live


def run_coupled(eps_grid, double f, double p, double r, long long nsteps,
                key, bint coupled=True):
    """Drive one comparison chain per epsilon from (0, 0) for ``nsteps``.

    All chains share each step's uniform when ``coupled``; otherwise each
    chain after the first consumes its own draw (negative control).
    Returns ``(first_violation_step, left, right)``; the step is -1 when
    componentwise ordering in epsilon held throughout.
    """
    eps_arr = np.ascontiguousarray(eps_grid, dtype=np.float64)
    cdef double[::1] eps = eps_arr
    cdef Py_ssize_t ne = eps.shape[0]
    bg = make_bitgen(key)
    capsule = bg.capsule
    if not PyCapsule_IsValid(capsule, _CAPSULE):
        raise ValueError("invalid BitGenerator capsule")
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(capsule, _CAPSULE)

    L_arr = np.zeros(ne, dtype=np.int64)
    R_arr = np.zeros(ne, dtype=np.int64)
    cdef long long[::1] L = L_arr
    cdef long long[::1] R = R_arr
    cdef double pr_f = f * p * r
    cdef double p1r = p * (1.0 - r)
    cdef double fp = f * p
    cdef double u, ui, a
    cdef long long step
    cdef Py_ssize_t i
    cdef long long li, ri
    for step in range(1, nsteps + 1):
        u = rng.next_double(rng.state)
        for i in range(ne):
            if coupled or i == 0:
                ui = u
            else:
                ui = rng.next_double(rng.state)
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
                return (step, L_arr.tolist(), R_arr.tolist())
    return (-1, L_arr.tolist(), R_arr.tolist())
