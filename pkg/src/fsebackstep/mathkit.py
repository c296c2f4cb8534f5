"""Stateless kernels shared by the controller and the verification suites.

Everything here is a pure function of its arguments: the Fourier regressor,
the Gaussian RBF layer and its gradient with respect to the periodic-parameter
inputs, signed fractional powers, the smooth switch, the psi shaping function
and a handful of inequality oracles used by ``fsebackstep verify``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: Upper constant of the tanh gap inequality.
TANH_GAP_CONST = 0.2785

#: Absolute slack used by the inequality oracles to absorb round-off.
ORACLE_SLACK = 1e-12


# ---------------------------------------------------------------------------
# Fourier regressor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FourierBasis:
    """Truncated trigonometric regressor ``[1, √2 sin, √2 cos, ...]`` of odd length."""

    m: int
    period: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1 or self.m % 2 == 0:
            raise ValueError(f"Fourier term count must be an odd positive integer, got {self.m}")
        if not self.period > 0:
            raise ValueError(f"Fourier period must be positive, got {self.period}")
        object.__setattr__(self, "_harmonics", np.arange(1, (self.m - 1) // 2 + 1, dtype=float))

    def __call__(self, t: float) -> np.ndarray:
        return fse_basis(t, self)


def fse_basis(t: float, basis: FourierBasis) -> np.ndarray:
    """Evaluate the regressor at time ``t``.

    Component 0 is the constant 1; components ``2r-1`` and ``2r`` (0-based)
    are ``√2 sin(2πrt/T)`` and ``√2 cos(2πrt/T)`` for ``r = 1..(m-1)/2``.
    """
    out = np.empty(basis.m)
    out[0] = 1.0
    if basis.m > 1:
        phase = (2.0 * math.pi / basis.period) * t * basis._harmonics
        out[1::2] = math.sqrt(2.0) * np.sin(phase)
        out[2::2] = math.sqrt(2.0) * np.cos(phase)
    return out


def fse_eval(l_hat: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Periodic-parameter estimate ``l_hatᵀ rho`` (length q)."""
    l_hat = np.asarray(l_hat, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if l_hat.ndim != 2 or rho.ndim != 1 or l_hat.shape[0] != rho.shape[0]:
        raise ValueError(
            f"fse_eval: l_hat of shape {l_hat.shape} incompatible with rho of shape {rho.shape}"
        )
    return l_hat.T @ rho


# ---------------------------------------------------------------------------
# Gaussian RBF layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FseRbfEstimator:
    """Gaussian RBF network over ``[state (i); p_hat (q)]`` fed by a Fourier model of p.

    Node j outputs ``exp(-||x - c_j||² / w_j²)``.  The adjustable output weights
    and Fourier coefficients are not stored here; they are integrator states.
    """

    centers: np.ndarray
    widths: np.ndarray
    fourier: FourierBasis
    state_dim: int
    param_dim: int
    _inv_w2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        widths = np.broadcast_to(np.asarray(self.widths, dtype=float), (centers.shape[0],)).copy()
        if self.state_dim < 1 or self.param_dim < 1:
            raise ValueError("state_dim and param_dim must be positive")
        if centers.shape[1] != self.state_dim + self.param_dim:
            raise ValueError(
                f"center dimension {centers.shape[1]} != state_dim + param_dim "
                f"= {self.state_dim + self.param_dim}"
            )
        if np.any(widths <= 0):
            raise ValueError("RBF widths must be positive")
        centers.setflags(write=False)
        widths.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "widths", widths)
        inv_w2 = 1.0 / widths**2
        object.__setattr__(self, "_inv_w2", inv_w2)
        object.__setattr__(self, "_neg2_inv_w2", -2.0 * inv_w2)

    @property
    def node_count(self) -> int:
        return self.centers.shape[0]

    @property
    def fourier_terms(self) -> int:
        return self.fourier.m

    @classmethod
    def on_grid(cls, ranges, per_dim: int, width: float, fourier: FourierBasis, state_dim: int):
        """Network with centres on an evenly spaced tensor grid and a common width."""
        centers = grid_centers(ranges, per_dim)
        return cls(
            centers=centers,
            widths=np.full(len(centers), float(width)),
            fourier=fourier,
            state_dim=state_dim,
            param_dim=len(ranges) - state_dim,
        )

    def _input(self, state, p_hat) -> np.ndarray:
        state = np.asarray(state, dtype=float).reshape(-1)
        p_hat = np.asarray(p_hat, dtype=float).reshape(-1)
        if state.shape[0] != self.state_dim or p_hat.shape[0] != self.param_dim:
            raise ValueError(
                f"estimator expects {self.state_dim} states and {self.param_dim} parameters, "
                f"got {state.shape[0]} and {p_hat.shape[0]}"
            )
        return np.concatenate((state, p_hat))

    def activations(self, state, p_hat) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(H, dH/dp)`` from one pass; shapes ``(k,)`` and ``(k, q)``."""
        return self.activations_at(self._input(state, p_hat))

    def activations_at(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """:meth:`activations` for a ready-made input vector ``[state; p_hat]`` (unchecked)."""
        diff = x - self.centers
        h = np.exp(-np.einsum("ij,ij->i", diff, diff) * self._inv_w2)
        grad = (h * self._neg2_inv_w2)[:, None] * diff[:, self.state_dim:]
        return h, grad


def rbf_eval(est: FseRbfEstimator, state, p_hat) -> np.ndarray:
    """Gaussian activations ``H`` at ``[state; p_hat]``."""
    return est.activations(state, p_hat)[0]


def rbf_grad_p(est: FseRbfEstimator, state, p_hat) -> np.ndarray:
    """Analytic Jacobian of ``H`` with respect to the q parameter inputs, shape ``(k, q)``."""
    return est.activations(state, p_hat)[1]


def grid_centers(ranges: Sequence[tuple[float, float]], per_dim: int) -> np.ndarray:
    """Tensor-product grid of ``per_dim`` evenly spaced values per range, endpoints included.

    The last dimension varies fastest.
    """
    if per_dim < 1:
        raise ValueError("per_dim must be a positive integer")
    axes = []
    for lo, hi in ranges:
        if not lo < hi:
            raise ValueError(f"grid range must satisfy low < high, got ({lo}, {hi})")
        axes.append(np.linspace(lo, hi, per_dim) if per_dim > 1 else np.array([0.5 * (lo + hi)]))
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(axes))


# ---------------------------------------------------------------------------
# Scalar shaping functions
# ---------------------------------------------------------------------------


def sig_pow(x, m: float):
    """Signed power ``|x|^m sgn(x)``; works on floats and arrays."""
    if isinstance(x, np.ndarray):
        return np.sign(x) * np.abs(x) ** m
    if x == 0:
        return 0.0
    return math.copysign(abs(x) ** m, x)


@dataclass(frozen=True)
class SwitchRegion:
    """Valid-domain bounds ``c1 < c2`` for one RBF input, plus the smoothness order."""

    c1: float
    c2: float
    order: int = 2

    def __post_init__(self):
        if not 0 < self.c1 < self.c2:
            raise ValueError(f"switch region requires 0 < c1 < c2, got c1={self.c1}, c2={self.c2}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"switch order must be a positive integer, got {self.order}")


def smooth_switch(x: float, region: SwitchRegion) -> float:
    """1 inside ``[-c1, c1]``, 0 outside ``(-c2, c2)``, a cosⁿ∘sinⁿ ramp in between."""
    ax = abs(x)
    if ax <= region.c1:
        return 1.0
    if ax >= region.c2:
        return 0.0
    c1s = region.c1 * region.c1
    frac = (x * x - c1s) / (region.c2 * region.c2 - c1s)
    n = region.order
    return math.cos(0.5 * math.pi * math.sin(0.5 * math.pi * frac) ** n) ** n


def switch_indicator(states, p_hat, state_regions, param_regions) -> float:
    """Product of smooth switches over every state input and every parameter estimate."""
    if len(states) != len(state_regions) or len(p_hat) != len(param_regions):
        raise ValueError("switch_indicator: region counts do not match input dimensions")
    w = 1.0
    for x, reg in zip(states, state_regions):
        w *= smooth_switch(float(x), reg)
    for x, reg in zip(p_hat, param_regions):
        w *= smooth_switch(float(x), reg)
    return w


def psi(sigma: float, m_c: float, tau: float, eps: float) -> float:
    """Singularity-free finite-time shaping term.

    ``sig(σ)^(1+2m) · sqrt((a + τ² + ε²) / ((a + τ²)(a + ε²)))`` with
    ``a = |σ|^(2+2m)``.  Behaves like ``sig(σ)^m`` for large ``|σ|`` and is
    smooth through the origin.
    """
    a = abs(sigma) ** (2.0 + 2.0 * m_c)
    t2 = tau * tau
    e2 = eps * eps
    return sig_pow(sigma, 1.0 + 2.0 * m_c) * math.sqrt((a + t2 + e2) / ((a + t2) * (a + e2)))


# ---------------------------------------------------------------------------
# Inequality oracles
# ---------------------------------------------------------------------------


def lemma2_tanh_gap(sigma, kappa):
    """``|σ| - σ tanh(σ/κ)``; lies in ``[0, 0.2785κ]``. Vectorised."""
    return np.abs(sigma) - sigma * np.tanh(np.divide(sigma, kappa))


def psi_gap_bound(tau: float, eps: float) -> float:
    """Upper bound ``τε / sqrt(τ² + ε²)`` on ``|σ|^(1+m) - σ psi(σ)``."""
    return tau * eps / math.sqrt(tau * tau + eps * eps)


def lemma3_power_sum_check(z, beta: float, slack: float = ORACLE_SLACK) -> bool:
    """Check ``(Σ|z|)^β <= Σ|z|^β <= M^(1-β) (Σ|z|)^β``."""
    az = np.abs(np.asarray(z, dtype=float).reshape(-1))
    if az.size == 0:
        raise ValueError("lemma3_power_sum_check needs a nonempty vector")
    total_b = az.sum() ** beta
    sum_b = float(np.sum(az**beta))
    upper = az.size ** (1.0 - beta) * total_b
    return bool(total_b <= sum_b + slack and sum_b <= upper + slack)


def lemma3_margins(z, beta) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``(Σ|z|^β - (Σ|z|)^β, M^(1-β)(Σ|z|)^β - Σ|z|^β)`` for ``z`` of shape (N, M).

    Both margins are nonnegative when the double inequality holds.
    """
    az = np.abs(np.atleast_2d(np.asarray(z, dtype=float)))
    if az.shape[1] == 0:
        raise ValueError("lemma3_margins needs nonempty rows")
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (az.shape[0],))
    total_b = az.sum(axis=1) ** beta
    sum_b = np.sum(az ** beta[:, None], axis=1)
    upper = az.shape[1] ** (1.0 - beta) * total_b
    return sum_b - total_b, upper - sum_b


def lemma4_coefficients(m: float) -> tuple[float, float]:
    """The pair ``(β1, β2)`` for exponent ratio ``m``."""
    beta1 = (2.0 ** (m - 1.0) - 2.0 ** ((m - 1.0) * (m + 1.0))) / (1.0 + m)
    beta2 = (
        (2.0 * m + 1.0) / (m + 1.0)
        + 2.0 ** (-((m - 1.0) ** 2) * (m + 1.0)) / (m + 1.0)
        - 2.0 ** (m - 1.0)
    ) / (1.0 + m)
    return beta1, beta2


def _check_odd_ratio(m_c1: int, m_c2: int) -> float:
    if m_c1 <= 0 or m_c2 <= 0 or m_c1 % 2 == 0 or m_c2 % 2 == 0:
        raise ValueError(f"exponent ratio needs positive odd integers, got {m_c2}/{m_c1}")
    if not m_c2 < m_c1:
        raise ValueError(f"exponent ratio {m_c2}/{m_c1} must be < 1")
    return m_c2 / m_c1


def lemma4_check(chi_tilde: float, chi: float, m_c1: int, m_c2: int, slack: float = ORACLE_SLACK) -> bool:
    """Check ``χ̃ sig(χ-χ̃)^m <= -β1 |χ̃|^(1+m) + β2 |χ|^(1+m)`` with ``m = m_c2/m_c1``.

    ``1 + m`` has an even numerator, so the real odd-root power is ``|·|^(1+m)``.
    """
    m = _check_odd_ratio(m_c1, m_c2)
    b1, b2 = lemma4_coefficients(m)
    lhs = chi_tilde * sig_pow(chi - chi_tilde, m)
    rhs = -b1 * abs(chi_tilde) ** (1.0 + m) + b2 * abs(chi) ** (1.0 + m)
    return bool(lhs <= rhs + slack)


def lemma4_margin(chi_tilde, chi, m_c1: int, m_c2: int):
    """Vectorised ``rhs - lhs`` of the odd-power cross-term inequality (nonnegative when it holds)."""
    m = _check_odd_ratio(m_c1, m_c2)
    b1, b2 = lemma4_coefficients(m)
    chi_tilde = np.asarray(chi_tilde, dtype=float)
    chi = np.asarray(chi, dtype=float)
    lhs = chi_tilde * sig_pow(chi - chi_tilde, m)
    rhs = -b1 * np.abs(chi_tilde) ** (1.0 + m) + b2 * np.abs(chi) ** (1.0 + m)
    return rhs - lhs


# ---------------------------------------------------------------------------
# Fast finite-time calculators
# ---------------------------------------------------------------------------


def settling_time_bound(v1: float, v2: float, m: float, nu: float, V0: float) -> float:
    """Settling-time upper bound for ``V' <= -v1 V - v2 V^m + v3``."""
    if not (v1 > 0 and v2 > 0 and 0 < m < 1 and 0 < nu < 1 and V0 >= 0):
        raise ValueError("settling_time_bound: need v1, v2 > 0, m and nu in (0, 1), V0 >= 0")
    vp = V0 ** (1.0 - m)
    first = math.log((nu * v1 * vp + v2) / v2) / (nu * v1 * (1.0 - m))
    second = math.log((v1 * vp + nu * v2) / (nu * v2)) / (v1 * (1.0 - m))
    return max(first, second)


def residual_bound(v1: float, v2: float, v3: float, m: float, nu: float) -> float:
    """Radius (in V) of the residual set the Lyapunov function enters in finite time."""
    if not (v1 > 0 and v2 > 0 and v3 >= 0 and 0 < m < 1 and 0 < nu < 1):
        raise ValueError("residual_bound: need v1, v2 > 0, v3 >= 0, m and nu in (0, 1)")
    return min(v3 / ((1.0 - nu) * v1), (v3 / ((1.0 - nu) * v2)) ** (1.0 / m))
