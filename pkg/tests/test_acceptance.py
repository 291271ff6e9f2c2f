"""Acceptance suite: one test per criterion, each printing a PASS/WARN/FAIL
line with the measured quantities (run with ``pytest -s`` to see them all).

Statistical criteria run at fixed seeds and stated tolerances.  Criterion 4
is asserted exactly as stated even though the critical-split concentration
decays like n^(-1/4) and is measurably pre-asymptotic at the stated
horizon from either canonical start; it is expected to fail, and the test
prints the measured convergence trend for the record.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.special import betaln as scipy_betaln

from fitscape import backend
from fitscape.chains import (BasState, LRState, bas1_probs, bas1_step,
                             bas_probs, bas_step, eps_probs, eps_step,
                             lr_probs, lr_step)
from fitscape.cli import main as cli_main
from fitscape.core import Params, new_population
from fitscape.experiments import mutant_growth
from fitscape.rng import stream_key
from fitscape.stats import (SizeHistogram, extinction_times, fitness_cdf,
                            geometric_checkpoints, ks_distance,
                            law_adjudicate, mass_ratio, slope_fit)
from fitscape.theory import (law_bas_geometric, law_pure_birth,
                             law_theorem_stated, mass_balance_mean,
                             moment_exists)


def report(num, verdict, detail):
    print(f"ACCEPTANCE {num:>2} {verdict}: {detail}")


def run_model(p, r, steps, seed, replicate):
    state = new_population(Params(p=p, r=r, steps=steps, seed=seed), replicate)
    state._k.run(steps)
    return state


# -- 1: one-step kernels are sampled exactly --------------------------------------


def _check_sampler(case_name, state_fn, probs_fn, step_fn, rng, n=100_000,
                   n_exact=2000):
    """Draw n transitions by inverse transform over the kernel's interval
    layout, verify the scalar stepper agrees on a prefix, and check each
    interval frequency against its probability within 4 binomial sigma."""
    state = state_fn(rng)
    probs = probs_fn(state)
    w = np.array([x for _s, x in probs])
    assert abs(w.sum() - 1.0) < 1e-12, (case_name, w.sum())
    cum = np.cumsum(w)
    us = rng.random(n)
    idx = np.minimum(np.searchsorted(cum, us, side="right"), len(w) - 1)
    for u, i in zip(us[:n_exact], idx[:n_exact]):
        assert step_fn(state, float(u)) == probs[i][0], (case_name, u)
    counts = np.bincount(idx, minlength=len(w))
    for i, pi in enumerate(w):
        sigma = math.sqrt(n * pi * (1.0 - pi))
        assert abs(counts[i] - n * pi) <= 4.0 * sigma + 1e-9, (
            case_name, i, counts[i], n * pi, sigma)


def _rand_params(rng):
    p = rng.uniform(0.55, 0.95)
    r = rng.uniform(0.1, 0.9)
    return Params(p=p, r=r, steps=0, seed=0)


def test_acceptance_01_kernel_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20250801)
    cases = []

    def lr_case(name, make_state):
        cases.append((name,
                      make_state,
                      lambda s: lr_probs(s, s._params),
                      lambda s, u: lr_step(s, s._params, u)))

    def eps_case(name, make_state):
        cases.append((name,
                      make_state,
                      lambda s: eps_probs(s, s._eps, s._params),
                      lambda s, u: eps_step(s, s._eps, s._params, u)))

    def tag(state, params, eps=None):
        # stash the parameter context on the (frozen) state object
        object.__setattr__(state, "_params", params)
        if eps is not None:
            object.__setattr__(state, "_eps", eps)
        return state

    f_rand = lambda rng: rng.uniform(0.05, 0.95)
    lr_case("split-empty", lambda rng: tag(LRState(0, 0, f_rand(rng)), _rand_params(rng)))
    lr_case("split-left0", lambda rng: tag(LRState(0, int(rng.integers(1, 60)), f_rand(rng)), _rand_params(rng)))
    lr_case("split-right0", lambda rng: tag(LRState(int(rng.integers(1, 60)), 0, f_rand(rng)), _rand_params(rng)))
    lr_case("split-interior", lambda rng: tag(LRState(int(rng.integers(1, 60)), int(rng.integers(1, 60)), f_rand(rng)), _rand_params(rng)))
    eps_case("eps-empty", lambda rng: tag(LRState(0, 0, f_rand(rng)), _rand_params(rng), rng.uniform()))
    eps_case("eps-left0", lambda rng: tag(LRState(0, int(rng.integers(1, 60)), f_rand(rng)), _rand_params(rng), rng.uniform()))
    eps_case("eps-right0", lambda rng: tag(LRState(int(rng.integers(1, 60)), 0, f_rand(rng)), _rand_params(rng), rng.uniform()))
    eps_case("eps-interior", lambda rng: tag(LRState(int(rng.integers(1, 60)), int(rng.integers(1, 60)), f_rand(rng)), _rand_params(rng), float(rng.choice([0.0, 1.0, rng.uniform()]))))

    def bas_case(name, make_state):
        cases.append((name,
                      make_state,
                      lambda s: bas_probs(s, s._params),
                      lambda s, u: bas_step(s, s._params, u)))

    bas_case("sites-empty", lambda rng: tag(BasState(0, 0, f_rand(rng)), _rand_params(rng)))
    bas_case("sites-left0", lambda rng: tag(BasState(0, int(rng.integers(1, 60)), f_rand(rng)), _rand_params(rng)))
    bas_case("sites-right0", lambda rng: tag(BasState(int(rng.integers(1, 60)), 0, f_rand(rng)), _rand_params(rng)))
    bas_case("sites-interior", lambda rng: tag(BasState(int(rng.integers(1, 60)), int(rng.integers(1, 60)), f_rand(rng)), _rand_params(rng)))

    class _S(int):
        pass

    def walk_state(rng):
        s = _S(int(rng.integers(0, 40)))
        s._params = _rand_params(rng)
        return s

    cases.append(("sites-walk", walk_state,
                  lambda s: bas1_probs(int(s), s._params),
                  lambda s, u: bas1_step(int(s), s._params, u)))

    for name, state_fn, probs_fn, step_fn in cases:
        for _ in range(20):
            _check_sampler(name, state_fn, probs_fn, step_fn, rng)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    report(1, "PASS", f"{len(cases)} kernel cases x 20 states x 1e5 draws "
                      f"within 4 sigma in {elapsed:.1f}s (< 30s)")


# -- 2: monotone coupling ----------------------------------------------------------

def test_acceptance_02_coupling_ordering(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "coupling"
    rc = cli_main(["coupling-check", "--grid-size", "11", "--steps", "10000",
                   "--seeds", "50", "--seed", "2", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert rc == 0
    with open(out / "coupling.json") as fh:
        rep = json.load(fh)
    assert rep["ok"] and not rep["violations"]
    assert elapsed < 10.0
    report(2, "PASS", f"coupling-check exit 0: 11-point grid, 50 streams x "
                      f"1e4 steps, 0 ordering violations in {elapsed:.1f}s (< 10s)")


# -- 3: recurrent extinction in the subcritical regime ------------------------------

def test_acceptance_03_recurrent_extinction():
    counts = []
    for s in range(10):
        state = new_population(Params(p=0.45, r=0.5, steps=100_000, seed=3), s)
        _n, N, *_rest = state._k.run_sampled(100_000, 1, 0.5)
        counts.append(len(extinction_times(N)))
    assert min(counts) >= 10, counts
    report(3, "PASS", f"p=0.45: empty-population steps per run min={min(counts)} "
                      f"(>= 10 required) over 10 seeds")


# -- 4: concentration above the critical split ---------------------------------------

def test_acceptance_04_critical_split_concentration():
    """Stated tolerances: every run reaches mass ratio >= 0.95 at the
    critical split and site-CDF KS <= 0.05 by n = 1e5.  The left-share
    decay at the critical split is ~n^(-1/4) (verified over 1e5..1.6e6),
    so this horizon is pre-asymptotic and the criterion is expected to
    fail; measurements are printed for the record."""
    t0 = time.perf_counter()
    fc = 2.0 / 3.0
    ratios, kss = [], []
    for s in range(8):
        state = run_model(0.75, 0.5, 100_000, seed=4, replicate=s)
        ratios.append(mass_ratio(state, fc))
        kss.append(ks_distance(fitness_cdf(state), fc))
    elapsed = time.perf_counter() - t0
    ok = min(ratios) >= 0.95 and max(kss) <= 0.05
    report(4, "PASS" if ok else "FAIL",
           f"mass ratio min {min(ratios):.4f} (need >= 0.95), "
           f"KS max {max(kss):.4f} (need <= 0.05) at n=1e5, 8 seeds, "
           f"{elapsed:.1f}s (< 60s)")
    assert elapsed < 60.0
    assert min(ratios) >= 0.95, (
        f"per-run mass ratios {np.round(ratios, 4).tolist()} below 0.95: "
        f"the critical-split left share decays ~n^(-1/4) and n=1e5 is "
        f"pre-asymptotic from the single-founder (or empty) start")
    assert max(kss) <= 0.05, (
        f"per-run KS {np.round(kss, 4).tolist()} above 0.05 at n=1e5")


# -- 5: phase-2 drift towards the top ------------------------------------------------

def test_acceptance_05_phase2_drift_and_site_exponent():
    split = 0.9
    finals, trends, slopes = [], [], []
    cps = np.array(geometric_checkpoints(1000, 100_000, 1.25))
    cps = (cps // 100) * 100
    for s in range(8):
        state = new_population(Params(p=0.6, r=0.5, steps=100_000, seed=0), s)
        n, N, S, L, R, _minf = state._k.run_sampled(100_000, 100, split)
        mask = (n >= 1000) & (N > 0)
        ratio = R[mask] / N[mask]
        finals.append(float(ratio[-1]))
        trends.append(float(np.polyfit(np.log(n[mask]), ratio, 1)[0]))
        idx = np.searchsorted(n, cps)
        slopes.append(slope_fit(cps, S[idx]))
    assert min(finals) >= 0.5, finals
    assert min(trends) > 0.0, trends
    exponent = float(np.mean(slopes))
    err = abs(exponent - 0.5)
    verdict = "PASS" if err <= 0.15 else ("WARN" if err <= 0.25 else "FAIL")
    report(5, verdict,
           f"p=0.6: mass ratio above {split} min {min(finals):.3f} (>= 0.5), "
           f"all trends positive; site-count exponent {exponent:.3f} "
           f"vs 0.5 (pass band 0.15, warn band 0.25)")
    assert err <= 0.25, (exponent, slopes)


# -- 6: pure-birth size law -----------------------------------------------------------

def test_acceptance_06_pure_birth_law():
    t0 = time.perf_counter()
    pooled = SizeHistogram({}, (0.0, 1.0))
    for s in range(8):
        state = run_model(1.0, 0.5, 100_000, seed=6, replicate=s)
        pooled = pooled.merge(SizeHistogram.from_state(state, (0.0, 1.0)))
    law = law_pure_birth(0.5)
    emp = pooled.normalized()
    worst_rel = 0.0
    for k in range(1, 6):
        exact = 4.0 / (k * (k + 1) * (k + 2))
        worst_rel = max(worst_rel, abs(emp.get(k, 0.0) - exact) / exact)
    tv = law_adjudicate(pooled, [law], 50)["distances"][0]["tv"]
    elapsed = time.perf_counter() - t0
    assert worst_rel < 0.05, worst_rel
    assert tv < 0.02, tv
    assert elapsed < 60.0
    report(6, "PASS", f"p=1: per-size rel err (k<=5) max {worst_rel:.4f} "
                      f"(< 0.05), TV {tv:.4f} (< 0.02), {elapsed:.1f}s (< 60s)")


# -- 7: mass balance adjudicates the size-law constant ---------------------------------

def test_acceptance_07_mass_balance_adjudication(tmp_path):
    out = tmp_path / "adjudicate"
    rc = cli_main(["adjudicate", "--p", "0.75", "--r", "0.5",
                   "--steps", "100000", "--seed", "7", "--replicates", "8",
                   "--out", str(out)])
    assert rc == 0
    with open(out / "adjudication.json") as fh:
        rep = json.load(fh)
    mean = rep["empirical_mean"]
    assert 3.6 <= mean <= 4.4, rep
    assert rep["winner"] == "consistent" or rep["discrepancy"], rep
    assert mass_balance_mean(0.75, 0.5) == pytest.approx(4.0)
    note = ("rate-consistent law wins" if rep["winner"] == "consistent"
            else f"discrepancy recorded: {rep['discrepancy']}")
    report(7, "PASS", f"pooled mean size above critical fitness "
                      f"{mean:.3f} in [3.6, 4.4] (balance mean 4); {note}; "
                      f"TVs {[(d['law'], round(d['tv'], 4)) for d in rep['distances']]}")


# -- 8: uniform-attachment baseline stays geometric -------------------------------------

def test_acceptance_08_baseline_geometric_law():
    from fitscape.chains import bas_full_simulate
    pooled = None
    for s in range(8):
        h = bas_full_simulate(Params(p=0.75, r=0.5, steps=100_000, seed=8), s)
        pooled = h if pooled is None else pooled.merge(h)
    law = law_bas_geometric(0.75, 0.5)
    rep = law_adjudicate(pooled, [law], 50)
    tv = rep["distances"][0]["tv"]
    mean = rep["empirical_mean"]
    assert tv < 0.03, tv
    assert 3.6 <= mean <= 4.4, mean
    report(8, "PASS", f"baseline variant: TV to Geom(1/4) {tv:.4f} (< 0.03), "
                      f"mean {mean:.3f} in [3.6, 4.4]")


# -- 9: focal-mutant growth -------------------------------------------------------------

def test_acceptance_09_focal_growth():
    rep = mutant_growth(Params(p=1.0, r=0.5, steps=10_000, seed=9),
                        ell=100, replicates=200)
    z = rep["final_diff_mean"] / rep["final_diff_sem"]
    fitted = rep["fitted_exponent"]
    assert abs(z) < 3.0, (rep["final_mc_mean"], rep["final_oracle_mean"], z)
    assert abs(fitted - 0.5) <= 0.05, fitted
    report(9, "PASS", f"p=1: MC mean {rep['final_mc_mean']:.3f} vs exact "
                      f"product {rep['final_oracle_mean']:.3f} (z={z:.2f}, "
                      f"|z|<3); fitted exponent {fitted:.3f} in 0.5 +- 0.05")
    # report-only at p = 3/4: ambiguity between the two candidate exponents
    rep2 = mutant_growth(Params(p=0.75, r=0.5, steps=10_000, seed=9),
                         ell=100, replicates=60, min_fitness=2.0 / 3.0)
    cands = rep2["candidate_exponents"]
    report(9, "INFO", f"p=3/4 (report-only): fitted exponent "
                      f"{rep2['fitted_exponent']:.3f}; candidates "
                      f"per-step {cands['per_step']:.3f} / per-birth "
                      f"{cands['per_birth']:.3f}")


# -- 10: moment criterion against a partial-sum oracle -----------------------------------

def test_acceptance_10_moment_criterion():
    ps = [0.62, 0.67, 0.72, 0.78, 0.85]
    rs = [0.64, 0.69, 0.77, 0.83, 0.92]
    checked = 0
    for p in ps:
        for r in rs:
            c = law_theorem_stated(p, r).shape
            for m in (1, 2, 3):
                # oracle: dyadic block sums of k^m p_k computed through an
                # independent beta-function route; the series converges iff
                # the block ratio falls below 1
                blocks = []
                for j in range(12, 17):
                    ks = np.arange(2 ** j, 2 ** (j + 1), dtype=np.float64)
                    pk = np.exp(math.log(c) + scipy_betaln(1.0 + c, ks))
                    blocks.append(float((ks ** m * pk).sum()))
                converges = blocks[-1] / blocks[-2] < 1.0
                assert converges == moment_exists(m, p, r), (p, r, m, blocks)
                checked += 1
    report(10, "PASS", f"moment criterion agrees with the partial-sum "
                       f"oracle on {checked} of {len(ps) * len(rs) * 3} "
                       f"(p, r, m) combinations")


# -- 11: determinism and performance ------------------------------------------------------

def test_acceptance_11_determinism_and_performance(tmp_path):
    args = ["simulate", "--p", "0.75", "--r", "0.5", "--steps", "50000",
            "--seed", "11", "--sample-every", "100"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_main(args + ["--out", str(a)]) == 0
    assert cli_main(args + ["--out", str(b)]) == 0
    for name in ("sites.csv", "traj.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    with open(a / "manifest.json") as fh:
        ma = json.load(fh)
    with open(b / "manifest.json") as fh:
        mb = json.load(fh)
    for m in (ma, mb):
        m.pop("elapsed_ms")
        m["params"].pop("out")
    assert ma == mb

    kernel = backend.PopKernel(0.75, 0.5, stream_key(11, 0))
    t0 = time.perf_counter()
    kernel.run(1_000_000)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    report(11, "PASS", f"identical manifests give byte-identical outputs; "
                       f"1e6 steps in {elapsed:.2f}s (< 10s) on the "
                       f"{backend.BACKEND} backend")
