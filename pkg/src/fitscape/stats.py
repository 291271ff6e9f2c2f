"""Observers and estimators over population snapshots and trajectories.

Estimators are pure functions of a snapshot; accumulators (histograms,
extinction counters) merge associatively and commutatively so replicate
results can be pooled in any order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (AttachBirth, Death, MutantBirth, Params, PopulationState,
                   new_population)
from ._pykernel import EV_ATTACH, EV_DEATH, EV_MUTANT


class FitnessCDF:
    """Empirical distribution of site positions (one point per site)."""

    def __init__(self, fitnesses):
        fs = np.sort(np.asarray(fitnesses, dtype=np.float64))
        if fs.size == 0:
            raise ValueError("no sites")
        self.fs = fs

    def __call__(self, f):
        return np.searchsorted(self.fs, f, side="right") / self.fs.size

    def left_limit(self, f):
        return np.searchsorted(self.fs, f, side="left") / self.fs.size


def fitness_cdf(state: PopulationState) -> FitnessCDF:
    if state.total == 0:
        raise ValueError("no sites")
    _, f, _, _ = state.snapshot()
    return FitnessCDF(f)


def limit_cdf(f: float, f_c: float) -> float:
    """max(f - f_c, 0) / (1 - f_c): the limiting site CDF above f_c."""
    if f_c >= 1.0:
        raise ValueError("limit CDF undefined for f_c >= 1")
    return max(f - f_c, 0.0) / (1.0 - f_c)


def ks_distance(F: FitnessCDF, f_c: float) -> float:
    """sup |F - limit| over the support, with left limits at the jumps."""
    pts = np.append(F.fs, f_c)
    limit = np.array([limit_cdf(float(x), f_c) for x in pts])
    upper = np.abs(F(pts) - limit)
    lower = np.abs(F.left_limit(pts) - limit)
    return float(max(upper.max(), lower.max()))


@dataclass
class SizeHistogram:
    """Sites binned by head count, within a fitness window.

    ``from_state`` uses the closed window [lo, hi].  The normalized form
    of an empty histogram is the point mass at size 0 (the empty-state
    convention).
    """

    counts: dict[int, int] = field(default_factory=dict)
    window: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def from_state(cls, state: PopulationState,
                   window: tuple[float, float] = (0.0, 1.0)) -> "SizeHistogram":
        lo, hi = window
        _, f, c, _ = state.snapshot()
        counts: dict[int, int] = {}
        for x, k in zip(f, c):
            if lo <= x <= hi:
                k = int(k)
                counts[k] = counts.get(k, 0) + 1
        return cls(counts, window)

    @property
    def is_empty(self) -> bool:
        return not self.counts

    def total_sites(self) -> int:
        return sum(self.counts.values())

    def total_individuals(self) -> int:
        return sum(k * v for k, v in self.counts.items())

    def merge(self, other: "SizeHistogram") -> "SizeHistogram":
        if self.window != other.window:
            raise ValueError("windows differ")
        counts = dict(self.counts)
        for k, v in other.counts.items():
            counts[k] = counts.get(k, 0) + v
        return SizeHistogram(counts, self.window)

    def normalized(self) -> dict[int, float]:
        n = self.total_sites()
        if n == 0:
            return {0: 1.0}
        return {k: v / n for k, v in sorted(self.counts.items())}


def size_histogram(state: PopulationState,
                   window: tuple[float, float] = (0.0, 1.0)) -> SizeHistogram:
    return SizeHistogram.from_state(state, window)


def joint_size_fitness(state: PopulationState, bins: int = 20):
    """Size histogram per equal-width fitness bin (the joint law, binned).

    Returns a list of (lo, hi, SizeHistogram); bin edges are i/bins and
    the last bin includes fitness 1.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    _, f, c, _ = state.snapshot()
    per_bin: list[dict[int, int]] = [dict() for _ in range(bins)]
    for x, k in zip(f, c):
        b = min(int(x * bins), bins - 1)
        d = per_bin[b]
        k = int(k)
        d[k] = d.get(k, 0) + 1
    out = []
    for b, d in enumerate(per_bin):
        lo, hi = b / bins, (b + 1) / bins
        out.append((lo, hi, SizeHistogram(d, (lo, hi))))
    return out


def mean_site_size(h: SizeHistogram) -> float:
    n = h.total_sites()
    if n == 0:
        raise ValueError("empty histogram")
    return h.total_individuals() / n


def mass_ratio(state: PopulationState, f: float) -> float:
    """Share of individuals strictly above fitness f."""
    if state.total == 0:
        raise ValueError("empty population")
    return (state.total - state.left_count(f)) / state.total


def extinction_times(ns) -> np.ndarray:
    """Indices of a head-count trajectory where the population is empty."""
    return np.flatnonzero(np.asarray(ns) == 0)


def slope_fit(xs, ys) -> float:
    """Least-squares slope of log y against log x; needs >= 3 positive points."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def law_adjudicate(h: SizeHistogram, laws, k_max: int = 50) -> dict:
    """Total-variation fit of each candidate law to a size histogram.

    Cells are k = 1..k_max-1 plus a pooled tail at k >= k_max.  Ties go
    to the earlier-listed law.  Returns a report dict with per-law
    distances, the winner, and the raw empirical mean.
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    n = h.total_sites()
    if n == 0:
        raise ValueError("empty histogram")
    ks = np.arange(1, k_max)
    emp = np.zeros(k_max)  # emp[0..k_max-2] are cells 1..k_max-1; emp[-1] tail
    for k, v in h.counts.items():
        if k < k_max:
            emp[k - 1] += v
        else:
            emp[-1] += v
    emp /= n
    distances = []
    winner = None
    best = math.inf
    for law in laws:
        q = np.append(law.pmf(ks), law.survival(k_max))
        total = float(q.sum())
        if not (np.all(q >= 0.0) and abs(total - 1.0) < 1e-9):
            raise ValueError(f"law {law.name!r} does not normalize "
                             f"(cells sum to {total})")
        tv = 0.5 * float(np.abs(emp - q).sum())
        distances.append({"law": law.name, "tv": tv, "law_mean": law.mean()})
        if tv < best:
            best = tv
            winner = law.name
    return {
        "k_max": k_max,
        "total_sites": n,
        "empirical_mean": mean_site_size(h),
        "distances": distances,
        "winner": winner,
    }


# -- focal-mutant tracking ------------------------------------------------------

@dataclass(frozen=True)
class FocalTrack:
    """Head count of one tracked site at requested checkpoints.

    ``birth_step`` is the actual founding step of the tracked mutant (the
    first mutant at or after the requested step).  Checkpoints before the
    founding record 0.  ``alive`` is False iff the site was deleted.
    """

    birth_step: int
    fitness: float
    checkpoints: tuple[int, ...]
    counts: tuple[int, ...]
    alive: bool


def geometric_checkpoints(ell: int, horizon: int, ratio: float = 1.25):
    """Checkpoint ladder ceil(ell * ratio^j) capped at the horizon."""
    if ell < 1 or horizon < ell:
        raise ValueError("need 1 <= ell <= horizon")
    out = []
    x = float(ell)
    while True:
        n = math.ceil(x)
        if n > horizon:
            break
        if not out or n > out[-1]:
            out.append(n)
        x *= ratio
    if out[-1] != horizon:
        out.append(horizon)
    return out


def focal_mutant_track(params: Params, birth_step: int,
                       checkpoints=None, min_fitness: float | None = None,
                       replicate: int = 0,
                       use_event_log: bool = False) -> FocalTrack:
    """Track the first mutant born at or after ``birth_step``.

    The tracked site's count is recorded at each checkpoint (default: the
    geometric ladder from ``birth_step`` to the horizon).  With
    ``min_fitness`` set, mutants at or below it are skipped.  The fast
    path jumps between checkpoints and reads the count directly; the
    ``use_event_log`` path recomputes the count from the event stream and
    must agree (same seed, same trajectory).
    """
    horizon = params.steps
    if not 1 <= birth_step <= horizon:
        raise ValueError("need 1 <= birth_step <= horizon")
    if checkpoints is None:
        checkpoints = geometric_checkpoints(birth_step, horizon)
    checkpoints = sorted(set(int(c) for c in checkpoints))
    if checkpoints and checkpoints[-1] > horizon:
        raise ValueError("checkpoints beyond the horizon")

    state = new_population(params, replicate)
    kernel = state._k
    kernel.run(birth_step - 1)
    slot = -1
    fitness = math.nan
    while kernel.nstep < horizon:
        kind, s, g, _removed = kernel.advance()
        if kind == EV_MUTANT and (min_fitness is None or g > min_fitness):
            slot = s
            fitness = g
            break
    if slot < 0:
        raise ValueError("no focal mutant")
    born = kernel.nstep

    counts = []
    if use_event_log:
        count = 1
        ci = 0
        while ci < len(checkpoints) and checkpoints[ci] < born:
            counts.append(0)
            ci += 1
        while ci < len(checkpoints) and checkpoints[ci] == born:
            counts.append(count)
            ci += 1
        while ci < len(checkpoints):
            kind, s, _g, _removed = kernel.advance()
            if s == slot:
                if kind == EV_ATTACH:
                    count += 1
                elif kind == EV_DEATH:
                    count -= 1
            if kernel.nstep == checkpoints[ci]:
                counts.append(count)
                ci += 1
    else:
        for c in checkpoints:
            if c < born:
                counts.append(0)
                continue
            kernel.run(c - kernel.nstep)
            counts.append(kernel.count_of(slot))
    alive = (counts[-1] > 0) if counts else True
    return FocalTrack(born, fitness, tuple(checkpoints), tuple(counts), alive)


# -- run observers ----------------------------------------------------------------

class TrajectoryRecorder:
    """Observer recording (n, N, S, L, R, min_fitness) at a cadence."""

    def __init__(self, split_f: float, every: int = 1):
        self.split_f = split_f
        self.every = every
        self.rows: list[tuple] = []
        self._l = None

    def __call__(self, n: int, state: PopulationState, event) -> None:
        if self._l is None:
            # observers run post-step, so this is already the exact count
            self._l = state.left_count(self.split_f)
        elif isinstance(event, MutantBirth):
            if event.fitness <= self.split_f:
                self._l += 1
        elif isinstance(event, AttachBirth):
            if state.fitness_of(event.slot) <= self.split_f:
                self._l += 1
        elif isinstance(event, Death):
            if state.fitness_of(event.slot) <= self.split_f:
                self._l -= 1
        if n % self.every == 0:
            total = state.total
            minf = state.min_fitness() if total else math.nan
            self.rows.append((n, total, state.num_sites, self._l,
                              total - self._l, minf))


class ExtinctionCounter:
    """Observer counting steps on which the population is empty."""

    def __init__(self):
        self.times: list[int] = []

    def __call__(self, n: int, state: PopulationState, event) -> None:
        if state.total == 0:
            self.times.append(n)

    def merge(self, other: "ExtinctionCounter") -> "ExtinctionCounter":
        out = ExtinctionCounter()
        out.times = sorted(self.times + other.times)
        return out


# -- serialization -----------------------------------------------------------------

def write_hist_csv(path, h: SizeHistogram, laws=(), k_max: int = 50) -> None:
    """hist.csv schema: k, count, empirical_prob, one column per law.

    Rows cover k = 1..k_max; the k_max row pools the tail (counts at
    k >= k_max against each law's survival mass), so the empirical_prob
    column sums to 1.
    """
    n = h.total_sites()
    ks = list(range(1, k_max + 1))
    counts = [0] * len(ks)
    for k, v in h.counts.items():
        counts[min(k, k_max) - 1] += v
    cols = []
    for law in laws:
        body = list(law.pmf(np.arange(1, k_max, dtype=np.float64)))
        body.append(law.survival(k_max))
        cols.append(body)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "count", "empirical_prob"] + [law.name for law in laws])
        for i, k in enumerate(ks):
            prob = counts[i] / n if n else 0.0
            row = [k, counts[i], format(prob, ".17g")]
            row += [format(col[i], ".17g") for col in cols]
            w.writerow(row)


def write_fcdf_csv(path, fitnesses, f_c: float) -> None:
    """fcdf.csv schema: f, F_emp, F_limit, one row per site (ascending).

    ``fitnesses`` is the collection of live site positions (empty gives a
    header-only file).  The limit column is left empty when f_c >= 1 (no
    limiting CDF exists there).
    """
    fs = np.sort(np.asarray(fitnesses, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f", "F_emp", "F_limit"])
        for i, x in enumerate(fs):
            limit = format(limit_cdf(float(x), f_c), ".17g") if f_c < 1.0 else ""
            w.writerow([format(float(x), ".17g"),
                        format((i + 1) / fs.size, ".17g"),
                        limit])


def write_focal_csv(path, track: FocalTrack) -> None:
    """focal.csv schema: n, count."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "count"])
        for n, c in zip(track.checkpoints, track.counts):
            w.writerow([n, c])
