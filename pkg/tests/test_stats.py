
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fitscape.core import Params, PopulationState, new_population, run
from fitscape.stats import (ExtinctionCounter, FitnessCDF, SizeHistogram,
                            TrajectoryRecorder, extinction_times, fitness_cdf,
                            focal_mutant_track, geometric_checkpoints,
                            joint_size_fitness, ks_distance, law_adjudicate,
                            limit_cdf, mass_ratio, mean_site_size,
                            size_histogram, slope_fit, write_fcdf_csv,
                            write_focal_csv, write_hist_csv)
from fitscape.theory import SizeLaw, law_bas_geometric, law_pure_birth

P34 = Params(p=0.75, r=0.5, steps=0, seed=0)


def make_state(sites, params=P34):
    return PopulationState.from_sites(params, sites)


# -- CDF and KS -------------------------------------------------------------------

def test_fitness_cdf_examples():
    F = fitness_cdf(make_state([(0.1, 1), (0.5, 2), (0.9, 1)]))
    assert F(0.5) == pytest.approx(2 / 3)
    assert F(0.0) == 0.0
    assert F(1.0) == 1.0
    F = fitness_cdf(make_state([(0.0, 1), (0.7, 1)]))
    assert F(0.0) == 0.5  # closed interval: fitness-0 sites count
    with pytest.raises(ValueError, match="no sites"):
        fitness_cdf(make_state([]))


def test_fitness_cdf_is_monotone_step_function():
    F = fitness_cdf(make_state([(0.2, 1), (0.4, 1), (0.8, 1)]))
    xs = np.linspace(0, 1, 101)
    vals = F(xs)
    assert np.all(np.diff(vals) >= 0)
    assert vals.min() >= 0.0 and vals.max() <= 1.0


def test_limit_cdf_examples():
    assert limit_cdf(2 / 3, 2 / 3) == 0.0
    assert limit_cdf(1.0, 2 / 3) == pytest.approx(1.0)
    assert limit_cdf(5 / 6, 2 / 3) == pytest.approx(0.5)
    assert limit_cdf(0.1, 2 / 3) == 0.0
    with pytest.raises(ValueError):
        limit_cdf(0.5, 1.0)


def test_ks_distance_at_limit_quantiles():
    f_c = 2 / 3
    S = 1000
    sites = [(f_c + (i + 0.5) / S * (1 - f_c), 1) for i in range(S)]
    F = fitness_cdf(make_state(sites))
    assert ks_distance(F, f_c) <= 1.0 / S + 1e-12


def test_ks_distance_single_site_at_one():
    F = FitnessCDF([1.0])
    assert ks_distance(F, 0.0) == pytest.approx(1.0)


def test_ks_distance_bounded():
    rng = np.random.default_rng(3)
    for _ in range(20):
        F = FitnessCDF(rng.random(rng.integers(1, 50)))
        d = ks_distance(F, 0.25)
        assert 0.0 <= d <= 1.0


# -- size histograms -----------------------------------------------------------------

def test_size_histogram_examples():
    s = make_state([(0.7, 2), (0.9, 1)])
    assert size_histogram(s).counts == {1: 1, 2: 1}
    assert size_histogram(s, (0.8, 1.0)).counts == {1: 1}
    empty = size_histogram(make_state([]))
    assert empty.is_empty
    assert empty.normalized() == {0: 1.0}  # empty-state point-mass convention


def test_size_histogram_totals_match_state():
    state = run(Params(p=0.75, r=0.5, steps=20_000, seed=12))
    h = size_histogram(state)
    assert h.total_sites() == state.num_sites
    assert h.total_individuals() == state.total


def test_joint_size_fitness_marginal():
    state = run(Params(p=0.75, r=0.5, steps=10_000, seed=13))
    parts = joint_size_fitness(state, bins=20)
    assert len(parts) == 20
    merged: dict[int, int] = {}
    for _lo, _hi, h in parts:
        for k, v in h.counts.items():
            merged[k] = merged.get(k, 0) + v
    assert merged == size_histogram(state).counts


def test_histogram_merge():
    a = SizeHistogram({1: 2, 3: 1})
    b = SizeHistogram({1: 1, 5: 4})
    assert a.merge(b).counts == {1: 3, 3: 1, 5: 4}
    with pytest.raises(ValueError):
        a.merge(SizeHistogram({1: 1}, window=(0.5, 1.0)))


@settings(max_examples=100)
@given(st.dictionaries(st.integers(1, 30), st.integers(1, 100), max_size=8),
       st.dictionaries(st.integers(1, 30), st.integers(1, 100), max_size=8),
       st.dictionaries(st.integers(1, 30), st.integers(1, 100), max_size=8))
def test_histogram_merge_assoc_comm(da, db, dc):
    a, b, c = SizeHistogram(da), SizeHistogram(db), SizeHistogram(dc)
    assert a.merge(b).counts == b.merge(a).counts
    assert a.merge(b).merge(c).counts == a.merge(b.merge(c)).counts


def test_mean_site_size():
    assert mean_site_size(SizeHistogram({2: 1, 4: 1})) == pytest.approx(3.0)
    assert mean_site_size(SizeHistogram({1: 17})) == pytest.approx(1.0)
    assert mean_site_size(SizeHistogram({1: 2, 2: 1, 4: 1})) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        mean_site_size(SizeHistogram({}))


def test_mass_ratio_examples():
    s = make_state([(0.2, 3), (0.8, 5)])
    assert mass_ratio(s, 0.5) == pytest.approx(5 / 8)
    assert mass_ratio(s, 0.1) == pytest.approx(1.0)
    assert mass_ratio(s, 0.9) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        mass_ratio(make_state([]), 0.5)


def test_extinction_times_examples():
    assert extinction_times([1, 0, 1, 0]).tolist() == [1, 3]
    assert extinction_times([1, 2, 3]).tolist() == []
    assert extinction_times([0, 0, 0]).tolist() == [0, 1, 2]


# -- regression helpers ----------------------------------------------------------------

def test_slope_fit_exact_power_laws():
    xs = [1.0, 2.0, 4.0, 8.0]
    assert slope_fit(xs, [x ** 2 for x in xs]) == pytest.approx(2.0, abs=1e-12)
    assert slope_fit(xs, [5.0] * 4) == pytest.approx(0.0, abs=1e-12)
    assert slope_fit(xs, [3.0 * x for x in xs]) == pytest.approx(1.0, abs=1e-12)


def test_slope_fit_errors():
    with pytest.raises(ValueError):
        slope_fit([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        slope_fit([1.0, 2.0, 0.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        slope_fit([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])


# -- law adjudication -------------------------------------------------------------------

def test_law_adjudicate_exact_proportional_histogram():
    # counts exactly proportional to Geom(1/2) with the tail pooled at 10
    counts = {k: 2 ** (20 - k) for k in range(1, 10)}
    counts[10] = 2 ** 11
    h = SizeHistogram(counts)
    geo = SizeLaw("geometric", "geometric", 0.5)
    other = law_pure_birth(0.5)
    report = law_adjudicate(h, [geo, other], k_max=10)
    tvs = {d["law"]: d["tv"] for d in report["distances"]}
    assert tvs["geometric"] == pytest.approx(0.0, abs=1e-12)
    assert tvs["pure-birth"] > 0.05
    assert report["winner"] == "geometric"


def test_law_adjudicate_tie_goes_to_first():
    h = SizeHistogram({1: 10, 2: 5})
    a = SizeLaw("first", "geometric", 0.5)
    b = SizeLaw("second", "geometric", 0.5)
    report = law_adjudicate(h, [a, b], k_max=5)
    assert report["winner"] == "first"


def test_law_adjudicate_point_masses_tv_one():
    h = SizeHistogram({2: 7})
    point_at_one = SizeLaw("point1", "geometric", 1.0)
    report = law_adjudicate(h, [point_at_one], k_max=5)
    assert report["distances"][0]["tv"] == pytest.approx(1.0)


def test_law_adjudicate_rejects_unnormalized_law():
    class Bogus:
        name = "bogus"
        def pmf(self, k):
            return np.full(np.shape(k), 0.5)
        def survival(self, k):
            return 0.5
        def mean(self):
            return 1.0
    with pytest.raises(ValueError, match="does not normalize"):
        law_adjudicate(SizeHistogram({1: 1}), [Bogus()], k_max=5)
    with pytest.raises(ValueError):
        law_adjudicate(SizeHistogram({}), [law_bas_geometric(0.75, 0.5)])
    with pytest.raises(ValueError):
        law_adjudicate(SizeHistogram({1: 1}), [], k_max=1)


# -- focal tracking ----------------------------------------------------------------------

def test_geometric_checkpoints_ladder():
    cps = geometric_checkpoints(100, 10_000)
    assert cps[0] == 100
    assert cps[-1] == 10_000
    assert all(b > a for a, b in zip(cps, cps[1:]))
    assert cps[1] == 125


def test_focal_track_fast_path_matches_event_log():
    params = Params(p=0.9, r=0.5, steps=3000, seed=5)
    fast = focal_mutant_track(params, 50)
    slow = focal_mutant_track(params, 50, use_event_log=True)
    assert fast == slow


def test_focal_track_pure_birth_nondecreasing():
    params = Params(p=1.0, r=0.9, steps=2000, seed=6)
    track = focal_mutant_track(params, 10)
    assert track.alive
    assert all(b >= a for a, b in zip(track.counts, track.counts[1:]))
    assert track.counts[0] >= 1


def test_focal_track_checkpoints_before_birth_are_zero():
    params = Params(p=1.0, r=0.001, steps=50_000, seed=8)
    # mutants are rare, so the founding step lands well after the request
    track = focal_mutant_track(params, 10, checkpoints=[10, 20, 50_000])
    assert track.birth_step > 10
    assert track.counts[0] == 0


def test_focal_track_no_mutant_error():
    params = Params(p=0.75, r=0.5, steps=50, seed=9)
    with pytest.raises(ValueError, match="no focal mutant"):
        focal_mutant_track(params, 1, min_fitness=0.99999999)


def test_focal_track_min_fitness_filter():
    params = Params(p=0.75, r=0.5, steps=5000, seed=10)
    track = focal_mutant_track(params, 100, min_fitness=0.9)
    assert track.fitness > 0.9


# -- observers ----------------------------------------------------------------------------

def test_trajectory_recorder_matches_kernel_sampler():
    params = Params(p=0.75, r=0.5, steps=3000, seed=14)
    rec = TrajectoryRecorder(split_f=2 / 3, every=50)
    run(params, observers=[rec])
    fresh = new_population(params)
    n, N, S, L, R, minf = fresh._k.run_sampled(params.steps, 50, 2 / 3)
    got = np.array([(a, b, c, d, e) for a, b, c, d, e, _m in rec.rows])
    ref = np.column_stack([n, N, S, L, R])[1:]  # drop the entry row at n=0
    assert np.array_equal(got, ref)
    rec_min = np.array([m for *_rest, m in rec.rows])
    assert np.allclose(rec_min, minf[1:], equal_nan=True)


def test_extinction_counter_merge():
    a = ExtinctionCounter()
    b = ExtinctionCounter()
    a.times = [3, 9]
    b.times = [5]
    assert a.merge(b).times == [3, 5, 9]
    assert b.merge(a).times == [3, 5, 9]


# -- csv emitters ---------------------------------------------------------------------------

def test_write_hist_csv_schema(tmp_path):
    h = SizeHistogram({1: 6, 2: 3, 9: 1})
    path = tmp_path / "hist.csv"
    write_hist_csv(path, h, [law_pure_birth(0.5)], k_max=5)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,count,empirical_prob,pure-birth"
    assert len(lines) == 6
    rows = [line.split(",") for line in lines[1:]]
    assert [int(r[0]) for r in rows] == [1, 2, 3, 4, 5]
    assert sum(int(r[1]) for r in rows) == 10  # tail pooled at k_max
    assert sum(float(r[2]) for r in rows) == pytest.approx(1.0, abs=1e-9)
    assert sum(float(r[3]) for r in rows) == pytest.approx(1.0, abs=1e-9)


def test_write_fcdf_csv_schema(tmp_path):
    path = tmp_path / "fcdf.csv"
    write_fcdf_csv(path, [0.7, 0.8, 0.95], 2 / 3)
    lines = path.read_text().splitlines()
    assert lines[0] == "f,F_emp,F_limit"
    assert len(lines) == 4
    last = lines[-1].split(",")
    assert float(last[1]) == pytest.approx(1.0)
    assert float(last[2]) == pytest.approx(limit_cdf(0.95, 2 / 3))
    # no limiting CDF when the critical fitness reaches 1
    write_fcdf_csv(path, [0.7], 4 / 3)
    assert path.read_text().splitlines()[1].endswith(",")
    write_fcdf_csv(path, [], 0.5)
    assert path.read_text() == "f,F_emp,F_limit\n"


def test_write_focal_csv_schema(tmp_path):
    params = Params(p=1.0, r=0.5, steps=500, seed=3)
    track = focal_mutant_track(params, 10)
    path = tmp_path / "focal.csv"
    write_focal_csv(path, track)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,count"
    assert len(lines) == len(track.checkpoints) + 1
