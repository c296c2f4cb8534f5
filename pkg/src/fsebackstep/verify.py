"""Randomised oracle suites for the inequality helpers and the RBF parameter gradient."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .mathkit import (
    ORACLE_SLACK,
    TANH_GAP_CONST,
    FourierBasis,
    FseRbfEstimator,
    lemma2_tanh_gap,
    lemma3_margins,
    lemma4_margin,
    psi,
    psi_gap_bound,
    rbf_grad_p,
)

GRAD_STEP = 1e-5
GRAD_REL_TOL = 1e-6
GRAD_MAX_SAMPLES = 1000
LEMMA4_EXPONENTS = ((5, 3), (7, 5), (9, 7))  # (m_c1, m_c2), ratio m_c2/m_c1
DEFAULT_SEED = 20240601


@dataclass
class SuiteResult:
    name: str
    samples: int
    failures: int
    worst: float  # smallest margin seen (negative beyond the slack means failure)
    counterexample: Optional[str]
    seconds: float

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name:<12} {self.samples - self.failures}/{self.samples} "
                f"worst margin {self.worst:.3e} ({self.seconds:.2f} s)")


def _signed_log_uniform(rng, n, lo, hi):
    return rng.choice((-1.0, 1.0), n) * 10.0 ** rng.uniform(lo, hi, n)


def _first_bad(margin: np.ndarray, slack: float) -> Optional[int]:
    bad = np.flatnonzero(~(margin >= -slack))
    return int(bad[0]) if bad.size else None


def suite_tanh_gap(n: int, slack: float, rng) -> SuiteResult:
    """Gap in ``[0, 0.2785κ]`` and equal to the closed form ``2|σ| / (exp(2|σ|/κ) + 1)``."""
    t0 = time.perf_counter()
    sigma = _signed_log_uniform(rng, n, -4, 2)
    kappa = 10.0 ** rng.uniform(-3, 1, n)
    gap = lemma2_tanh_gap(sigma, kappa)
    with np.errstate(over="ignore"):
        closed = 2.0 * np.abs(sigma) / (np.exp(2.0 * np.abs(sigma) / kappa) + 1.0)
    margins = np.stack([gap, TANH_GAP_CONST * kappa - gap, -np.abs(gap - closed)])
    worst = margins.min(axis=0)
    bad = np.flatnonzero(~(worst >= -slack))
    cx = None
    if bad.size:
        j = bad[0]
        cx = (f"sigma={float(sigma[j])!r}, kappa={float(kappa[j])!r}: gap={float(gap[j])!r}, "
              f"closed form={float(closed[j])!r}, bound={float(TANH_GAP_CONST * kappa[j])!r}")
    return SuiteResult("tanh-gap", n, int(bad.size), float(worst.min()), cx, time.perf_counter() - t0)


def suite_psi_gap(n: int, slack: float, rng) -> SuiteResult:
    """``0 <= |σ|^(1+m) - σ ψ(σ) < τε/sqrt(τ²+ε²)``."""
    t0 = time.perf_counter()
    sigma = _signed_log_uniform(rng, n, -4, 1)
    tau = 10.0 ** rng.uniform(-3, 0, n)
    eps = 10.0 ** rng.uniform(-3, 0, n)
    m_c = np.array([b / a for a, b in LEMMA4_EXPONENTS])[rng.integers(0, len(LEMMA4_EXPONENTS), n)]
    sp = np.array([s * psi(s, m, ta, ep) for s, m, ta, ep in zip(sigma.tolist(), m_c.tolist(), tau.tolist(), eps.tolist())])
    gap = np.abs(sigma) ** (1.0 + m_c) - sp
    bound = np.array([psi_gap_bound(a, b) for a, b in zip(tau.tolist(), eps.tolist())])
    lower, upper = gap, bound - gap
    worst = np.minimum(lower, upper)
    # the upper inequality is strict
    bad = np.flatnonzero(~((lower >= -slack) & (upper > -slack)))
    cx = None
    if bad.size:
        j = bad[0]
        cx = (f"sigma={float(sigma[j])!r}, m_c={float(m_c[j])!r}, tau={float(tau[j])!r}, eps={float(eps[j])!r}: "
              f"gap={float(gap[j])!r}, bound={float(bound[j])!r}")
    return SuiteResult("psi-gap", n, int(bad.size), float(worst.min()), cx, time.perf_counter() - t0)


def suite_power_sum(n: int, slack: float, rng) -> SuiteResult:
    """``(Σ|z|)^β <= Σ|z|^β <= M^(1-β)(Σ|z|)^β`` for vectors of length 1..8."""
    t0 = time.perf_counter()
    sizes = rng.integers(1, 9, n)
    beta = rng.uniform(0.0, 1.0, n)
    beta[beta == 0.0] = 1.0
    beta[rng.random(n) < 0.05] = 1.0
    failures, worst, cx = 0, math.inf, None
    for M in range(1, 9):
        rows = np.flatnonzero(sizes == M)
        if rows.size == 0:
            continue
        z = rng.standard_normal((rows.size, M)) * 10.0 ** rng.uniform(-3, 1, (rows.size, 1))
        lo, hi = lemma3_margins(z, beta[rows])
        w = np.minimum(lo, hi)
        worst = min(worst, float(w.min()))
        bad = np.flatnonzero(~(w >= -slack))
        failures += int(bad.size)
        if bad.size and cx is None:
            j = bad[0]
            cx = f"z={z[j].tolist()!r}, beta={float(beta[rows[j]])!r}: margins=({float(lo[j])!r}, {float(hi[j])!r})"
    return SuiteResult("power-sum", n, failures, worst, cx, time.perf_counter() - t0)


def suite_odd_power(n: int, slack: float, rng) -> SuiteResult:
    """``χ̃ sig(χ-χ̃)^m <= -β1|χ̃|^(1+m) + β2|χ|^(1+m)`` for each odd-ratio exponent; n samples each."""
    t0 = time.perf_counter()
    failures, worst, cx = 0, math.inf, None
    for m1, m2 in LEMMA4_EXPONENTS:
        chi_t = rng.uniform(-5, 5, n)
        chi = rng.uniform(-5, 5, n)
        tiny = rng.random(n) < 0.05
        chi_t[tiny] *= 1e-6
        margin = lemma4_margin(chi_t, chi, m1, m2)
        worst = min(worst, float(margin.min()))
        j = _first_bad(margin, slack)
        bad = int(np.count_nonzero(~(margin >= -slack)))
        failures += bad
        if j is not None and cx is None:
            cx = f"m_c={m2}/{m1}, chi_tilde={float(chi_t[j])!r}, chi={float(chi[j])!r}: margin={float(margin[j])!r}"
    return SuiteResult("odd-power", n * len(LEMMA4_EXPONENTS), failures, worst, cx, time.perf_counter() - t0)


def benchmark_estimator() -> FseRbfEstimator:
    """216-node network on the pendulum grid with width 2."""
    return FseRbfEstimator.on_grid([(-1.5, 1.5), (-1.5, 1.5), (-3.0, 3.0)], 6, 2.0, FourierBasis(7, math.pi), 2)


def finite_difference_grad_p(est: FseRbfEstimator, state, p_hat, h: float = GRAD_STEP) -> np.ndarray:
    """Central differences of the Gaussian layer, built from the kernel formula directly."""

    def layer(p):
        x = np.concatenate((np.asarray(state, dtype=float), p))
        return np.array([math.exp(-float(np.sum((x - c) ** 2)) / (w * w)) for c, w in zip(est.centers, est.widths)])

    p_hat = np.asarray(p_hat, dtype=float)
    cols = []
    for j in range(p_hat.size):
        e = np.zeros(p_hat.size)
        e[j] = h
        cols.append((layer(p_hat + e) - layer(p_hat - e)) / (2.0 * h))
    return np.column_stack(cols)


def suite_gradient(n: int, rng, est: Optional[FseRbfEstimator] = None) -> SuiteResult:
    """Analytic ``dH/dp`` vs central differences, Frobenius relative error < 1e-6."""
    t0 = time.perf_counter()
    est = est or benchmark_estimator()
    lo = est.centers.min(axis=0)
    hi = est.centers.max(axis=0)
    failures, worst, cx = 0, math.inf, None
    for _ in range(n):
        x = rng.uniform(lo, hi)
        state, p = x[: est.state_dim], x[est.state_dim:]
        a = rbf_grad_p(est, state, p)
        fd = finite_difference_grad_p(est, state, p)
        rel = float(np.linalg.norm(a - fd) / max(np.linalg.norm(a), 1e-300))
        margin = GRAD_REL_TOL - rel
        worst = min(worst, margin)
        if not margin > 0:
            failures += 1
            if cx is None:
                cx = f"input={x.tolist()!r}: relative error {rel:.3e}"
    return SuiteResult("rbf-grad-p", n, failures, worst, cx, time.perf_counter() - t0)


SUITES: dict[str, Callable] = {
    "tanh-gap": suite_tanh_gap,
    "psi-gap": suite_psi_gap,
    "power-sum": suite_power_sum,
    "odd-power": suite_odd_power,
}


def run_suites(samples: int = 100_000, slack: float = ORACLE_SLACK, seed: int = DEFAULT_SEED) -> list[SuiteResult]:
    """Every inequality suite with ``samples`` draws plus the gradient check.

    ``slack`` is the absolute tolerance of the inequality suites; the gradient
    check uses its own relative threshold and at most 1000 inputs.
    """
    if int(samples) != samples or samples < 1:
        raise ValueError(f"sample count must be a positive integer, got {samples}")
    if not slack >= 0:
        raise ValueError(f"tolerance must be nonnegative, got {slack}")
    rng = np.random.default_rng(seed)
    results = [fn(int(samples), slack, rng) for fn in SUITES.values()]
    results.append(suite_gradient(min(int(samples), GRAD_MAX_SAMPLES), rng))
    return results
