"""Closed-form quantities of the model.

Critical fitness, the candidate site-size laws and their moments, the
geometric law of the uniform-attachment baseline variant, expected focal
growth, and the mean-field phase structure.

Two candidate laws are carried for the supercritical attachment model
(p < 1, pr > 1 - p).  Both are Yule-Simon shaped, p_k = c * B(1 + c, k),
but with different shape constants:

  theorem      c = (2p - 1) r / ((1 - r)(1 - p))
  consistent   c = (2p - 1) / (p (1 - r))

The two coincide exactly when pr = 1 - p (and at the often-used setting
p = 3/4, r = 1/2 their k = 1 values differ: 2/3 versus 4/7).  Only the
"consistent" constant reproduces the mean site size forced by rate
balance (see ``mass_balance_mean``); the toolkit keeps both first-class
and lets simulation adjudicate rather than silently picking one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Lanczos approximation of log-gamma (g = 607/128, 15 coefficients,
# Godfrey's set).  Relative accuracy of the resulting gamma values is
# ~1e-15 on the positive axis, comfortably inside a 1e-12 budget for
# arguments in [0.1, 1e6].
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_COEF = (
    0.99999999999999709182,
    57.156235665862923517, -59.597960355475491248, 14.136097974741747174,
    -0.49191381609762019978, 0.33994649984811888699e-4,
    0.46523628927048575665e-4, -0.98374475304879564677e-4,
    0.15808870322491248884e-3, -0.21026444172410488319e-3,
    0.21743961811521264320e-3, -0.16431810653676389022e-3,
    0.84418223983852743293e-4, -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
)
_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _log_gamma_positive(x):
    # valid for x >= 0.5, elementwise on arrays
    acc = np.full_like(x, _LANCZOS_COEF[0])
    for i in range(1, 15):
        acc = acc + _LANCZOS_COEF[i] / (x + (i - 1.0))
    t = x + (_LANCZOS_G - 0.5)
    return _LN_SQRT_2PI + (x - 0.5) * np.log(t) - t + np.log(acc)


def log_gamma(x):
    """ln Gamma(x) for x > 0; scalar or ndarray.

    Lanczos approximation with reflection below 0.5.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0.0):
        raise ValueError("log_gamma requires positive arguments")
    small = arr < 0.5
    # evaluate both branches on safe inputs, then select
    big_in = np.where(small, 1.0, arr)
    refl_in = np.where(small, arr, 0.25)
    out = _log_gamma_positive(big_in)
    refl = (np.log(np.pi / np.sin(np.pi * refl_in))
            - _log_gamma_positive(1.0 - refl_in))
    out = np.where(small, refl, out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def log_beta(a, b):
    """ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a + b); a, b > 0."""
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if np.any(a_arr <= 0.0) or np.any(b_arr <= 0.0):
        raise ValueError("log_beta requires positive arguments")
    out = log_gamma(a_arr) + log_gamma(b_arr) - log_gamma(a_arr + b_arr)
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return float(out)
    return out


# -- critical fitness and rate balance ----------------------------------------

def critical_fitness(p: float, r: float) -> float:
    """(1 - p) / (p r); may exceed 1 (then no site level is safe)."""
    return (1.0 - p) / (p * r)


def mass_balance_mean(p: float, r: float) -> float:
    """Asymptotic mean site size forced by rate balance.

    The population grows by 2p - 1 per step while surviving sites arrive
    at rate p(1 + r) - 1 per step, so any candidate size law must have
    mean (2p - 1) / (p(1 + r) - 1).  Requires pr > 1 - p.
    """
    if p * r <= 1.0 - p:
        raise ValueError("mass balance needs pr > 1 - p")
    return (2.0 * p - 1.0) / (p * (1.0 + r) - 1.0)


# -- candidate size laws -------------------------------------------------------

@dataclass(frozen=True)
class SizeLaw:
    """A closed-form site-size distribution on k = 1, 2, ...

    kind "yule":      p_k = c * B(1 + c, k)   (shape = c > 0)
    kind "geometric": p_k = q * (1 - q)^(k-1) (shape = q in (0, 1])
    """

    name: str
    kind: str
    shape: float

    def pmf(self, k):
        """P(X = k); scalar or ndarray, k >= 1."""
        k_arr = np.asarray(k, dtype=np.float64)
        if np.any(k_arr < 1):
            raise ValueError("sizes start at k = 1")
        if self.kind == "yule":
            c = self.shape
            out = np.exp(math.log(c) + log_beta(1.0 + c, k_arr))
        else:
            q = self.shape
            if q == 1.0:
                out = np.where(k_arr == 1.0, 1.0, 0.0)
            else:
                out = q * np.exp((k_arr - 1.0) * math.log(1.0 - q))
        if np.ndim(k) == 0:
            return float(out)
        return out

    def survival(self, k):
        """P(X >= k); survival(1) = 1 exactly in both families."""
        k_arr = np.asarray(k, dtype=np.float64)
        if np.any(k_arr < 1):
            raise ValueError("sizes start at k = 1")
        if self.kind == "yule":
            c = self.shape
            out = np.exp(math.log(c) + log_beta(c, k_arr))
        else:
            q = self.shape
            if q == 1.0:
                out = np.where(k_arr == 1.0, 1.0, 0.0)
            else:
                out = np.exp((k_arr - 1.0) * math.log(1.0 - q))
        if np.ndim(k) == 0:
            return float(out)
        return out

    def mean(self) -> float:
        if self.kind == "yule":
            c = self.shape
            return c / (c - 1.0) if c > 1.0 else math.inf
        return 1.0 / self.shape


def law_theorem_stated(p: float, r: float) -> SizeLaw:
    """Yule law with shape constant (2p-1)r / ((1-r)(1-p)).

    The first of the two candidate constants; undefined at p = 1 and its
    mean disagrees with ``mass_balance_mean`` unless pr = 1 - p.
    """
    if p >= 1.0:
        raise ValueError("the displayed constant is undefined at p = 1")
    if p * r <= 1.0 - p:
        raise ValueError("size law needs pr > 1 - p")
    c = (2.0 * p - 1.0) * r / ((1.0 - r) * (1.0 - p))
    return SizeLaw("theorem", "yule", c)


def law_proof_consistent(p: float, r: float) -> SizeLaw:
    """Yule law with the rate-consistent constant (2p-1) / (p(1-r)).

    This is the shape the embedded pure-birth computation yields; its
    mean c/(c-1) equals ``mass_balance_mean`` identically, and at p = 1
    it reduces to the pure-birth law.
    """
    if p * r <= 1.0 - p:
        raise ValueError("size law needs pr > 1 - p")
    c = (2.0 * p - 1.0) / (p * (1.0 - r))
    return SizeLaw("consistent", "yule", c)


def law_pure_birth(r: float) -> SizeLaw:
    """Pure-birth (p = 1) law: p_k = (1/(1-r)) B((2-r)/(1-r), k).

    Equivalently Yule with c = 1/(1-r) since (2-r)/(1-r) = 1 + c.
    """
    if not 0.0 < r < 1.0:
        raise ValueError("r must be in (0, 1)")
    return SizeLaw("pure-birth", "yule", 1.0 / (1.0 - r))


def law_bas_geometric(p: float, r: float) -> SizeLaw:
    """Geometric law of the uniform-attachment baseline variant.

    q = (pr - (1 - p)) / (2p - 1); requires q in (0, 1].
    """
    q = (p * r - (1.0 - p)) / (2.0 * p - 1.0)
    if not 0.0 < q <= 1.0:
        raise ValueError(f"geometric parameter {q} outside (0, 1]")
    return SizeLaw("geometric", "geometric", q)


LAW_FACTORIES = {
    "theorem": law_theorem_stated,
    "consistent": law_proof_consistent,
    "pure-birth": lambda p, r: law_pure_birth(r),
    "geometric": law_bas_geometric,
}


def pk_theorem_stated(k: int, p: float, r: float) -> float:
    return law_theorem_stated(p, r).pmf(k)


def pk_proof_consistent(k: int, p: float, r: float) -> float:
    return law_proof_consistent(p, r).pmf(k)


def pk_pure_birth(k: int, r: float) -> float:
    return law_pure_birth(r).pmf(k)


def bas_geometric(k: int, p: float, r: float) -> float:
    return law_bas_geometric(p, r).pmf(k)


def moment_exists(m: int, p: float, r: float) -> bool:
    """Whether the displayed-constant law has a finite m-th moment.

    True iff r > 1 - (2p-1) / (2p-1 + (1-p)m), i.e. iff the displayed
    shape constant exceeds m (strict).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if p >= 1.0:
        return True
    threshold = 1.0 - (2.0 * p - 1.0) / ((2.0 * p - 1.0) + (1.0 - p) * m)
    return r > threshold


# -- focal-mutant growth -------------------------------------------------------

def expected_focal_growth(ell: int, n: int, p: float, r: float,
                          mode: str = "gamma") -> float:
    """Expected relative growth of a site founded at time ell, seen at n.

    mode "gamma" evaluates the gamma-ratio expression
        G((2p-1)ell + 1) G((2p-1)n + 1 + p(1-r))
        ---------------------------------------- ,
        G((2p-1)ell + 1 + p(1-r)) G((2p-1)n + 1)
    which behaves like (n/ell)^(p(1-r)) for n >> ell.  mode "product"
    evaluates the exact product prod_{k=ell+1}^{n} (k + p(1-r)) / k over
    the integer range; at p = 1 the two agree to rounding.
    """
    if not 1 <= ell < n:
        raise ValueError("need 1 <= ell < n")
    a = p * (1.0 - r)
    if mode == "product":
        ks = np.arange(ell + 1, n + 1, dtype=np.float64)
        return float(np.exp(np.sum(np.log1p(a / ks))))
    if mode != "gamma":
        raise ValueError(f"unknown mode: {mode!r}")
    growth = 2.0 * p - 1.0
    x1 = growth * ell + 1.0
    x2 = growth * n + 1.0
    return float(math.exp(
        log_gamma(x1) + log_gamma(x2 + a) - log_gamma(x1 + a) - log_gamma(x2)))


# -- mean-field phases ---------------------------------------------------------

@dataclass(frozen=True)
class MeanFieldPhase:
    """Phase of (p, r) in the leftmost-site heuristic.

    gamma is (1 - p - pr) / (2p - 1) where defined (p > 1/2), else None.
    Phases: 1 decaying leftmost gap (all levels above the critical point
    persist), 2 sites grow like t^(1-gamma), 3 finitely many sites,
    4 recurrent extinction.
    """

    gamma: float | None
    phase: int
    p_c0: float
    p_c1: float
    p_c2: float


def meanfield_gamma(p: float, r: float) -> float:
    """(1 - p - pr) / (2p - 1); requires p > 1/2."""
    if p <= 0.5:
        raise ValueError("gamma is defined for p > 1/2")
    return (1.0 - p - p * r) / (2.0 * p - 1.0)


def classify_phase(p: float, r: float) -> MeanFieldPhase:
    """Assign (p, r) to one of the four mean-field phases.

    Boundaries follow half-open intervals: p = p_c1 belongs to phase 3
    and p = p_c2 to phase 2; p <= 1/2 is phase 4.
    """
    p_c0 = 0.5
    p_c1 = 2.0 / (3.0 + r)
    p_c2 = 1.0 / (1.0 + r)
    if p <= p_c0:
        return MeanFieldPhase(None, 4, p_c0, p_c1, p_c2)
    gamma = meanfield_gamma(p, r)
    if p <= p_c1:
        phase = 3
    elif p <= p_c2:
        phase = 2
    else:
        phase = 1
    return MeanFieldPhase(gamma, phase, p_c0, p_c1, p_c2)


def meanfield_y(t: float, C: float, p: float, r: float) -> float:
    """Leftmost-gap scale y_t = (f_c - 1) / (C t^gamma - 1).

    Only meaningful past the pre-asymptotic window: requires C t^gamma > 1.
    """
    gamma = meanfield_gamma(p, r)
    denom = C * t ** gamma - 1.0
    if denom <= 0.0:
        raise ValueError("meanfield_y needs C * t**gamma > 1")
    return (critical_fitness(p, r) - 1.0) / denom


def meanfield_site_scale(t: float, C: float, p: float, r: float) -> float:
    """Companion site-count scale r p t y_t (order t^(1-gamma))."""
    return r * p * t * meanfield_y(t, C, p, r)
