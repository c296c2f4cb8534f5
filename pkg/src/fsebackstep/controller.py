"""Composite FSE-RBFNN fast finite-time backstepping controller.

Every dynamic element of the controller (command filters, compensation
states, adaptive laws, serial-parallel predictors) is exposed as a function
returning time derivatives, so the integrator in :mod:`fsebackstep.sim` owns
all time stepping.  Step indices are 0-based in code; messages and column
names use 1-based step numbers.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from .mathkit import FseRbfEstimator, SwitchRegion, psi, sig_pow, switch_indicator
from .plant import PlantModel, Reference
from .state import AdaptiveState, AugmentedState, FilterState


class GainError(ValueError):
    """A tuning parameter violates one of the design constraints."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        super().__init__(f"constraint violated: {constraint}" + (f" ({detail})" if detail else ""))


class NonFiniteError(FloatingPointError):
    """NaN or Inf appeared in a controller quantity."""

    def __init__(self, quantity: str, t: float):
        self.quantity = quantity
        self.t = t
        super().__init__(f"non-finite value in {quantity} at t={t:.6g}")


def parse_exponent(value) -> Fraction:
    """Exponent ratio from ``"3/5"``, ``[3, 5]`` or a float close to an odd ratio."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (list, tuple)):
        return Fraction(int(value[0]), int(value[1]))
    return Fraction(float(value)).limit_denominator(999)


@dataclass(frozen=True)
class StepGains:
    """Tuning constants of one backstepping step.

    ``gamma_omega`` and ``gamma_l`` are either scalars (multiples of the
    identity) or full positive-definite matrices.  Filter constants belong to
    the command filter that produces this step's ``η_{i,c}``; they are unused
    for step 1.
    """

    k: float = 5.0
    r: float = 1.0
    n: float = 0.5
    kappa: float = 0.1
    kappa_n: float = 0.1
    tau_sigma: float = 0.01
    eps_sigma: float = 0.01
    gamma_omega: object = 10.0
    gamma_l: object = 15.0
    gamma_s: float = 5.0
    gamma_decay: float = 0.02
    gamma_1: float = 15.0
    gamma_2: float = 0.001
    gamma_3: float = 0.001
    gamma_n1: float = 15.0
    gamma_n2: float = 0.001
    gamma_n3: float = 0.001
    upsilon_1: float = 10.0
    upsilon_2: float = 1.0
    a_1: float = 4.0
    a_2: float = 4.0
    b_1: float = 4.0
    b_2: float = 4.0
    eps_c: float = 0.05
    m_d: float = 0.6
    m_ic: float = 0.7

    SCALARS = (
        "k", "r", "n", "kappa", "kappa_n", "tau_sigma", "eps_sigma", "gamma_s", "gamma_decay",
        "gamma_1", "gamma_2", "gamma_3", "gamma_n1", "gamma_n2", "gamma_n3",
        "upsilon_1", "upsilon_2", "a_1", "a_2", "b_1", "b_2", "eps_c", "m_d", "m_ic",
    )

    def __post_init__(self):
        for name in self.SCALARS:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise GainError(f"{name} >= 0", f"got {v}")
        for name in ("gamma_omega", "gamma_l"):
            g = getattr(self, name)
            if isinstance(g, (list, tuple, np.ndarray)):
                g = np.array(g, dtype=float)
                g.setflags(write=False)
                object.__setattr__(self, name, g)
            else:
                object.__setattr__(self, name, float(g))
        if not self.eps_c > 0:
            raise GainError("eps_c > 0", f"got {self.eps_c}")

    def validate(self, step: int) -> None:
        """Strict design constraints (every tuning constant positive, exponent ranges)."""
        tag = f"step {step + 1}"
        for name in self.SCALARS:
            if not getattr(self, name) > 0:
                raise GainError(f"{name} > 0", tag)
        for name in ("gamma_omega", "gamma_l"):
            g = getattr(self, name)
            if np.ndim(g) == 0:
                if not g > 0:
                    raise GainError(f"{name} positive definite", tag)
            else:
                if g.ndim != 2 or g.shape[0] != g.shape[1] or not np.allclose(g, g.T):
                    raise GainError(f"{name} symmetric square matrix", tag)
                if np.linalg.eigvalsh(g).min() <= 0:
                    raise GainError(f"{name} positive definite", tag)
        if not 0 < self.m_d < 1:
            raise GainError("m_d in (0, 1)", f"{tag}: got {self.m_d}")
        lo = self.m_d / (2.0 - self.m_d)
        if not lo < self.m_ic < 1:
            raise GainError(f"m_ic in (m_d/(2-m_d), 1) = ({lo:.4g}, 1)", f"{tag}: got {self.m_ic}")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass(frozen=True)
class ControllerGains:
    """Per-step gains plus the shared fractional exponent ``m_c`` (odd/odd, in (0.5, 1))."""

    m_c: Fraction
    steps: tuple[StepGains, ...]

    def __post_init__(self):
        object.__setattr__(self, "m_c", parse_exponent(self.m_c))
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "_m_c_float", float(self.m_c))

    @property
    def mc(self) -> float:
        return self._m_c_float

    def validate(self) -> None:
        num, den = self.m_c.numerator, self.m_c.denominator
        if not Fraction(1, 2) < self.m_c < 1:
            raise GainError("m_c in (0.5, 1)", f"got {float(self.m_c)}")
        if num % 2 == 0 or den % 2 == 0:
            raise GainError("m_c ratio of odd integers", f"got {num}/{den}")
        for i, s in enumerate(self.steps):
            s.validate(i)

    def replace_step(self, step: int, **changes) -> "ControllerGains":
        steps = list(self.steps)
        steps[step] = dataclasses.replace(steps[step], **changes)
        return ControllerGains(self.m_c, tuple(steps))

    def replace_all(self, **changes) -> "ControllerGains":
        return ControllerGains(self.m_c, tuple(dataclasses.replace(s, **changes) for s in self.steps))


def _gain_apply(gain, v: np.ndarray) -> np.ndarray:
    return gain * v if isinstance(gain, float) else gain @ v


# ---------------------------------------------------------------------------
# Estimator readout
# ---------------------------------------------------------------------------


@dataclass
class EstimatorOutputs:
    """Everything the control, adaptive and predictor laws read from one estimator.

    ``neural_a`` is ``||ρ Ω̂ᵀĤ'||_F²`` and ``neural_b`` is ``||Ĥ' l̂ᵀρ||²``.
    """

    rho: np.ndarray
    p_hat: np.ndarray
    H: np.ndarray
    H_grad: np.ndarray
    omega_hat: np.ndarray
    l_hat: np.ndarray
    omega_H: float
    omega_Hgrad: np.ndarray
    Hgrad_p: np.ndarray
    neural_a: float
    neural_b: float

    @classmethod
    def evaluate(cls, est: FseRbfEstimator, state, omega_hat, l_hat, t: float) -> "EstimatorOutputs":
        rho = est.fourier(t)
        p_hat = l_hat.T.dot(rho)
        if len(state) != est.state_dim:
            raise ValueError(f"estimator expects {est.state_dim} states, got {len(state)}")
        H, Hg = est.activations_at(np.concatenate((state, p_hat)))
        return cls.from_parts(rho, p_hat, H, Hg, omega_hat, l_hat)

    @classmethod
    def from_parts(cls, rho, p_hat, H, H_grad, omega_hat, l_hat) -> "EstimatorOutputs":
        omega_Hgrad = H_grad.T.dot(omega_hat)
        Hgrad_p = H_grad.dot(p_hat)
        return cls(
            rho, p_hat, H, H_grad, omega_hat, l_hat,
            float(omega_hat.dot(H)),
            omega_Hgrad,
            Hgrad_p,
            float(rho.dot(rho) * omega_Hgrad.dot(omega_Hgrad)),
            float(Hgrad_p.dot(Hgrad_p)),
        )


# ---------------------------------------------------------------------------
# Dynamic elements
# ---------------------------------------------------------------------------


def command_filter_deriv(fs: FilterState, alpha_prev: float, g: StepGains) -> tuple[float, float]:
    """Second-order finite-time command filter tracking ``alpha_prev``."""
    e = fs.eta_c - alpha_prev
    ed = g.eps_c * fs.eta_d
    acc = -g.a_1 * e - g.a_2 * sig_pow(e, g.m_ic) - g.b_1 * ed - g.b_2 * sig_pow(ed, g.m_d)
    return fs.eta_d, acc / (g.eps_c * g.eps_c)


def compensation_deriv(delta, G: Sequence[float], eta_c_next: Sequence[float], alphas: Sequence[float],
                       gains: ControllerGains) -> np.ndarray:
    """Compensation dynamics absorbing the command-filter errors.

    ``eta_c_next[i]`` is ``η_{i+2,c}`` (0-based: the filter output that follows
    ``alphas[i]``) for ``i < n-1``.
    """
    n = len(delta)
    m = gains.mc
    out = np.empty(n)
    for i in range(n):
        g = gains.steps[i]
        d = -g.k * delta[i] - g.r * sig_pow(float(delta[i]), m)
        if i < n - 1:
            d += G[i] * (eta_c_next[i] - alphas[i]) + G[i] * delta[i + 1]
        if i > 0:
            d -= G[i - 1] * delta[i - 1]
        out[i] = d
    return out


def virtual_control(g: StepGains, m_c: float, xi: float, sigma: float, feedforward: float, G: float,
                    w: float = 1.0, est: Optional[EstimatorOutputs] = None, mu_hat: float = 0.0,
                    F_bar: float = 1.0, G_prev: Optional[float] = None,
                    xi_prev: Optional[float] = None) -> float:
    """Virtual control ``α_i`` (the actual input for the last step).

    Without an estimator the step has no robust or neural term.  The cross
    term ``-(G_{i-1}/G_i) ξ_{i-1}`` is included when ``G_prev`` is given.
    """
    if not G > 0:
        raise ValueError(f"control gain G must be positive, got {G}")
    num = -g.k * xi + feedforward - g.n * psi(sigma, m_c, g.tau_sigma, g.eps_sigma)
    if est is not None:
        num -= (1.0 - w) * mu_hat * F_bar * math.tanh(F_bar * sigma / g.kappa)
        num -= w * (est.omega_H + 0.5 * sigma * est.neural_a + 0.5 * sigma * est.neural_b)
    alpha = num / G
    if G_prev is not None:
        alpha -= G_prev / G * xi_prev
    return alpha


def adaptive_derivs(g: StepGains, m_c: float, sigma: float, s_n: float, w: float, est: EstimatorOutputs,
                    mu_hat: float, F_bar: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Composite weight, Fourier-coefficient and robust-gain update laws."""
    drive = w * (sigma + g.gamma_s * s_n)
    d_omega = _gain_apply(g.gamma_omega, drive * (est.H - est.Hgrad_p) - g.gamma_decay * est.omega_hat)
    d_l = _gain_apply(g.gamma_l, (drive * est.rho)[:, None] * est.omega_Hgrad - g.gamma_decay * est.l_hat)
    d_mu = (
        g.gamma_1 * (1.0 - w) * F_bar * sigma * math.tanh(F_bar * sigma / g.kappa)
        - g.gamma_2 * mu_hat
        - g.gamma_3 * sig_pow(mu_hat, m_c)
    )
    return d_omega, d_l, d_mu


def predictor_deriv(g: StepGains, m_c: float, eta: float, eta_pred: float, w: float, est: EstimatorOutputs,
                    G: float, eta_next: float, mu_n_hat: float, F_bar: float) -> float:
    """Serial-parallel predictor ``η̂_i``; ``eta_next`` is ``η_{i+1}`` or ``u`` for the last step."""
    s = eta - eta_pred
    return (
        w * (est.omega_H + 0.5 * s * est.neural_a + 0.5 * s * est.neural_b)
        + G * eta_next
        + g.upsilon_1 * s
        + g.upsilon_2 * sig_pow(s, m_c)
        + (1.0 - w) * mu_n_hat * F_bar * math.tanh(F_bar * s / g.kappa_n)
    )


def mu_n_deriv(g: StepGains, m_c: float, s_n: float, w: float, mu_n_hat: float, F_bar: float) -> float:
    return (
        g.gamma_n1 * (1.0 - w) * s_n * F_bar * math.tanh(F_bar * s_n / g.kappa_n)
        - g.gamma_n2 * mu_n_hat
        - g.gamma_n3 * sig_pow(mu_n_hat, m_c)
    )


# ---------------------------------------------------------------------------
# Full controller
# ---------------------------------------------------------------------------


@dataclass
class LoopErrors:
    xi: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    s_n: np.ndarray


@dataclass
class ControllerDerivs:
    filters: list[tuple[float, float]]
    delta: np.ndarray
    adaptive: dict[int, AdaptiveState]


@dataclass
class PipelineOutput:
    u: float
    alphas: np.ndarray
    derivs: ControllerDerivs
    errors: LoopErrors
    w: dict[int, float]
    p_hat: dict[int, np.ndarray]
    omega_H: dict[int, float]


@dataclass(frozen=True)
class BacksteppingController:
    """Gains plus the estimator and switch-region design for each uncertain step.

    ``estimators`` maps a 0-based step index to its FSE-RBF network;
    ``state_regions[j]`` is the switch region of plant state ``j`` and
    ``param_regions[i]`` the regions of step ``i``'s parameter estimates.
    """

    gains: ControllerGains
    estimators: Mapping[int, FseRbfEstimator]
    state_regions: tuple[SwitchRegion, ...]
    param_regions: Mapping[int, tuple[SwitchRegion, ...]] = field(default_factory=dict)

    def check_model(self, model: PlantModel) -> None:
        n = model.order
        if len(self.gains.steps) != n:
            raise ValueError(f"gains cover {len(self.gains.steps)} steps, plant has {n}")
        if len(self.state_regions) != n:
            raise ValueError(f"need {n} state switch regions, got {len(self.state_regions)}")
        if set(self.estimators) != set(model.uncertain_steps()):
            raise ValueError(
                f"estimators on steps {sorted(s + 1 for s in self.estimators)} but plant uncertainty on "
                f"steps {[s + 1 for s in model.uncertain_steps()]}"
            )
        for i, est in self.estimators.items():
            ch = model.steps[i].channel
            if est.state_dim != i + 1 or est.param_dim != ch.param_dim:
                raise ValueError(f"step {i + 1} estimator dimensions do not match the plant")
            if len(self.param_regions.get(i, ())) != ch.param_dim:
                raise ValueError(f"step {i + 1} needs {ch.param_dim} parameter switch regions")

    def initial_state(self, model: PlantModel, eta0, reference: Reference, t0: float = 0.0) -> AugmentedState:
        """Zero adaptive states, ``η̂ = η(0)``, ``δ = 0`` and filters seeded at ``α`` (zero rate).

        Each ``α_{i-1}`` depends on its own filter's predecessor only, so the
        filters are seeded in step order from successive partial evaluations.
        """
        eta0 = np.asarray(eta0, dtype=float)
        n = model.order
        adaptive = {
            i: AdaptiveState.zeros(est.node_count, est.fourier_terms, est.param_dim, eta_pred=float(eta0[i]))
            for i, est in sorted(self.estimators.items())
        }
        aug = AugmentedState(eta0.copy(), [FilterState(0.0, 0.0) for _ in range(n - 1)], np.zeros(n), adaptive)
        for i in range(n - 1):
            alphas = control_pipeline(aug, model, reference, t0, self).alphas
            aug.filters[i] = FilterState(float(alphas[i]), 0.0)
        return aug


def control_pipeline(aug: AugmentedState, model: PlantModel, reference: Reference, t: float,
                     ctrl: BacksteppingController) -> PipelineOutput:
    """Evaluate the whole control law and every controller-side derivative at ``(aug, t)``."""
    gains = ctrl.gains
    m_c = gains.mc
    n = model.order
    eta_arr = aug.eta
    eta = eta_arr.tolist()
    delta = aug.delta.tolist()
    y_d, y_d_dot = reference.y_d(t), reference.y_d_dot(t)

    eta_c = [None] + [f.eta_c for f in aug.filters]
    xi = [eta[0] - y_d] + [eta[i] - eta_c[i] for i in range(1, n)]
    sigma = [x - d for x, d in zip(xi, delta)]
    s_n = [0.0] * n

    G = [step.G(eta[: i + 1]) for i, step in enumerate(model.steps)]
    alphas = [0.0] * n
    w_all, p_all, oh_all = {}, {}, {}
    est_out: dict[int, tuple[EstimatorOutputs, float, float]] = {}

    for i in range(n):
        g = gains.steps[i]
        ff = y_d_dot if i == 0 else aug.filters[i - 1].eta_d
        G_prev, xi_prev = (G[i - 1], xi[i - 1]) if i > 0 else (None, None)
        est = ctrl.estimators.get(i)
        if est is None:
            alphas[i] = virtual_control(g, m_c, xi[i], sigma[i], ff, G[i], G_prev=G_prev, xi_prev=xi_prev)
            continue
        a = aug.adaptive[i]
        bar = eta[: i + 1]
        out = EstimatorOutputs.evaluate(est, eta_arr[: i + 1], a.omega_hat, a.l_hat, t)
        w = switch_indicator(bar, out.p_hat.tolist(), ctrl.state_regions[: i + 1], ctrl.param_regions[i])
        F_bar = model.steps[i].F_bar(bar, t)
        if not F_bar > 0:
            raise ValueError(f"bound function of step {i + 1} must be positive, got {F_bar} at t={t}")
        alphas[i] = virtual_control(g, m_c, xi[i], sigma[i], ff, G[i], w=w, est=out, mu_hat=a.mu_hat,
                                    F_bar=F_bar, G_prev=G_prev, xi_prev=xi_prev)
        s_n[i] = eta[i] - a.eta_pred
        est_out[i] = (out, w, F_bar)
        w_all[i], p_all[i], oh_all[i] = w, out.p_hat, out.omega_H

    u = float(alphas[-1])
    if not math.isfinite(u):
        raise NonFiniteError("control input u", t)

    filters = [command_filter_deriv(aug.filters[i - 1], alphas[i - 1], gains.steps[i]) for i in range(1, n)]
    d_delta = compensation_deriv(delta, G, eta_c[1:], alphas, gains)

    d_adapt = {}
    for i, (out, w, F_bar) in est_out.items():
        g = gains.steps[i]
        a = aug.adaptive[i]
        d_om, d_l, d_mu = adaptive_derivs(g, m_c, sigma[i], s_n[i], w, out, a.mu_hat, F_bar)
        eta_next = eta[i + 1] if i + 1 < n else u
        d_pred = predictor_deriv(g, m_c, eta[i], a.eta_pred, w, out, G[i], eta_next, a.mu_n_hat, F_bar)
        d_mun = mu_n_deriv(g, m_c, s_n[i], w, a.mu_n_hat, F_bar)
        d_adapt[i] = AdaptiveState(d_om, d_l, d_mu, d_mun, d_pred)

    return PipelineOutput(
        u=u,
        alphas=np.array(alphas),
        derivs=ControllerDerivs(filters, d_delta, d_adapt),
        errors=LoopErrors(np.array(xi), np.array(delta), np.array(sigma), np.array(s_n)),
        w=w_all,
        p_hat=p_all,
        omega_H=oh_all,
    )
