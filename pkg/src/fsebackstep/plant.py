"""Strict-feedback plants, reference trajectories and the pendulum benchmark.

A plant of order n is

    η̇_i = F_i(η̄_i, t) + G_i(η̄_i) η_{i+1},   i < n
    η̇_n = F_n(η̄_n, t) + G_n(η̄_n) u

where ``η̄_i = (η_1, ..., η_i)``.  The time dependence of ``F_i`` enters only
through a periodic parameter ``p_i(t)`` of known period; the controller never
reads ``F_i`` or ``p_i``, they are used to integrate the plant and to log the
approximation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

StateFn = Callable[[np.ndarray, float], float]


@dataclass(frozen=True)
class UncertaintyChannel:
    """Periodic-parameter description for one step that carries an FSE-RBF estimator."""

    period: float
    param_dim: int = 1
    true_p: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"uncertainty period must be positive, got {self.period}")
        if self.param_dim < 1:
            raise ValueError("param_dim must be >= 1")


@dataclass(frozen=True)
class PlantStep:
    """One row of the strict-feedback cascade.

    ``F(eta_bar, t)`` is the true uncertainty, ``G(eta_bar)`` the known gain and
    ``F_bar(eta_bar, t)`` the known positive bound function.  ``channel`` is
    ``None`` when the step has no uncertainty to learn.
    """

    F: StateFn
    G: Callable[[np.ndarray], float]
    F_bar: StateFn
    channel: Optional[UncertaintyChannel] = None


@dataclass(frozen=True)
class PlantModel:
    name: str
    steps: tuple[PlantStep, ...]
    G_lower: float
    G_upper: float
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("plant must have at least one step")
        if not 0 < self.G_lower < self.G_upper:
            raise ValueError("plant gain bounds must satisfy 0 < G_lower < G_upper")

    @property
    def order(self) -> int:
        return len(self.steps)

    def uncertain_steps(self) -> list[int]:
        """0-based indices of steps with an uncertainty channel."""
        return [i for i, s in enumerate(self.steps) if s.channel is not None]

    def gains(self, eta: np.ndarray) -> list[float]:
        return [s.G(eta[: i + 1]) for i, s in enumerate(self.steps)]


def plant_deriv(model: PlantModel, eta, u: float, t: float) -> np.ndarray:
    """Right-hand side of the strict-feedback cascade."""
    eta = np.asarray(eta, dtype=float)
    n = model.order
    if eta.shape != (n,):
        raise ValueError(f"plant of order {n} got a state of shape {eta.shape}")
    out = np.empty(n)
    for i, step in enumerate(model.steps):
        bar = eta[: i + 1]
        nxt = eta[i + 1] if i + 1 < n else u
        out[i] = step.F(bar, t) + step.G(bar) * nxt
    return out


@dataclass(frozen=True)
class Reference:
    """Desired output ``y_d(t)`` with its analytic derivative."""

    y_d: Callable[[float], float]
    y_d_dot: Callable[[float], float]
    description: str = ""

    def __call__(self, t: float) -> tuple[float, float]:
        return self.y_d(t), self.y_d_dot(t)


def reference_eval(ref: Reference, t: float) -> tuple[float, float]:
    return ref.y_d(t), ref.y_d_dot(t)


def sine_reference(amplitude: float = 1.0, omega: float = 1.0, phase: float = 0.0, offset: float = 0.0) -> Reference:
    return Reference(
        y_d=lambda t: offset + amplitude * math.sin(omega * t + phase),
        y_d_dot=lambda t: amplitude * omega * math.cos(omega * t + phase),
        description=f"{offset} + {amplitude} sin({omega} t + {phase})",
    )


# ---------------------------------------------------------------------------
# Pendulum benchmark
# ---------------------------------------------------------------------------

PENDULUM_M = 2.0
PENDULUM_g = 9.8
PENDULUM_L = 1.0
PENDULUM_J = 0.5
#: μ in |F_2| <= μ F̄_2, valid for both bound choices below.
PENDULUM_MU2 = 20.85

PENDULUM_BOUNDS = {
    "sqrt": lambda bar, t: math.sqrt(1.0 + bar[1] * bar[1]),
    "quadratic": lambda bar, t: 1.0 + bar[1] * bar[1],
}


def pendulum_example(eta0: Sequence[float] = (0.5, 0.0), fse_period: float = math.pi, bound: str = "sqrt"):
    """Damped pendulum with a ``|cos t|`` periodic damping factor.

    Returns ``(model, reference, initial_state)``.  ``F_2 = 2.5 η_2 |cos t| -
    (0.5 M g L / J) sin η_1``, ``G_2 = 1/J``, ``y_d = sin t``.

    ``bound`` selects F̄_2: ``"sqrt"`` is ``sqrt(1 + η_2²)`` (|F_2| <= 19.76 F̄_2
    by Cauchy-Schwarz); ``"quadratic"`` is ``1 + η_2²``, which makes the robust
    term too stiff for fixed-step RK4 once η_2 grows past ~10.
    """
    if bound not in PENDULUM_BOUNDS:
        raise ValueError(f"unknown pendulum bound {bound!r}; choose from {sorted(PENDULUM_BOUNDS)}")
    grav = 0.5 * PENDULUM_M * PENDULUM_g * PENDULUM_L / PENDULUM_J

    def F2(bar, t):
        return 2.5 * bar[1] * abs(math.cos(t)) - grav * math.sin(bar[0])

    step1 = PlantStep(F=lambda bar, t: 0.0, G=lambda bar: 1.0, F_bar=lambda bar, t: 1.0)
    step2 = PlantStep(
        F=F2,
        G=lambda bar: 1.0 / PENDULUM_J,
        F_bar=PENDULUM_BOUNDS[bound],
        channel=UncertaintyChannel(
            period=fse_period, param_dim=1, true_p=lambda t: np.array([abs(math.cos(t))])
        ),
    )
    model = PlantModel(
        name="pendulum",
        steps=(step1, step2),
        G_lower=0.5,
        G_upper=3.0,
        description="eta1' = eta2; eta2' = 2.5 eta2 |cos t| - 19.6 sin eta1 + 2 u",
    )
    return model, sine_reference(), np.array(eta0, dtype=float)


# ---------------------------------------------------------------------------
# Inline plants from term lists
# ---------------------------------------------------------------------------

_FUNCS: dict[str, Callable[[float], float]] = {
    "id": lambda x: x,
    "abs": abs,
    "sin": math.sin,
    "cos": math.cos,
    "abs_sin": lambda x: abs(math.sin(x)),
    "abs_cos": lambda x: abs(math.cos(x)),
    "tanh": math.tanh,
    "exp": math.exp,
}


@dataclass(frozen=True)
class Factor:
    """``fn(scale * var) ** power`` where var is ``"t"`` or ``"eta<j>"`` (1-based)."""

    var: str
    fn: str = "id"
    scale: float = 1.0
    power: int = 1

    def __post_init__(self):
        if self.fn not in _FUNCS:
            raise ValueError(f"unknown factor function {self.fn!r}; choose from {sorted(_FUNCS)}")
        if self.var != "t":
            if not self.var.startswith("eta") or not self.var[3:].isdigit() or int(self.var[3:]) < 1:
                raise ValueError(f"factor variable must be 't' or 'eta<j>', got {self.var!r}")
        if int(self.power) != self.power or self.power < 0:
            raise ValueError(f"factor power must be a nonnegative integer, got {self.power}")

    @property
    def state_index(self) -> Optional[int]:
        return None if self.var == "t" else int(self.var[3:]) - 1

    def __call__(self, bar, t) -> float:
        x = t if self.var == "t" else bar[self.state_index]
        return _FUNCS[self.fn](self.scale * x) ** self.power


@dataclass(frozen=True)
class Term:
    coef: float
    factors: tuple[Factor, ...] = ()

    def __call__(self, bar, t) -> float:
        v = self.coef
        for f in self.factors:
            v *= f(bar, t)
        return v


@dataclass(frozen=True)
class TermSum:
    """Sum of product terms; the expression type of inline plant definitions."""

    terms: tuple[Term, ...] = ()

    def __call__(self, bar, t=0.0) -> float:
        return sum(term(bar, t) for term in self.terms)

    def max_state_index(self) -> int:
        idx = [f.state_index for term in self.terms for f in term.factors if f.state_index is not None]
        return max(idx, default=-1)

    def uses_time(self) -> bool:
        return any(f.var == "t" for term in self.terms for f in term.factors)

    @classmethod
    def parse(cls, terms_doc) -> "TermSum":
        """Build from a number or a list of ``{"coef": c, "factors": [...]}`` dicts."""
        if isinstance(terms_doc, (int, float)):
            return cls((Term(float(terms_doc)),))
        terms = []
        for raw in terms_doc:
            if not isinstance(raw, dict) or set(raw) - {"coef", "factors"}:
                raise ValueError(f"term must be a dict with keys 'coef' and 'factors', got {raw!r}")
            factors = []
            for fr in raw.get("factors", []):
                if not isinstance(fr, dict) or set(fr) - {"var", "fn", "scale", "power"} or "var" not in fr:
                    raise ValueError(f"bad factor {fr!r}")
                factors.append(Factor(**fr))
            terms.append(Term(float(raw.get("coef", 1.0)), tuple(factors)))
        return cls(tuple(terms))

    def to_terms(self):
        return [
            {
                "coef": term.coef,
                "factors": [
                    {"var": f.var, "fn": f.fn, "scale": f.scale, "power": f.power} for f in term.factors
                ],
            }
            for term in self.terms
        ]


def inline_plant(doc: dict) -> PlantModel:
    """Plant from a config dict.

    ``doc["steps"]`` is a list of ``{"F": terms, "G": terms, "F_bar": terms,
    "channel": null | {"period": T, "param_dim": q}}``; ``doc["G_bounds"]``
    gives ``[G_lower, G_upper]``.  Step ``i`` (1-based) may only reference
    ``eta1..eta<i>``.
    """
    steps = []
    for i, raw in enumerate(doc["steps"]):
        unknown = set(raw) - {"F", "G", "F_bar", "channel"}
        if unknown:
            raise ValueError(f"unknown keys in inline plant step {i + 1}: {sorted(unknown)}")
        F = TermSum.parse(raw.get("F", 0.0))
        G = TermSum.parse(raw.get("G", 1.0))
        F_bar = TermSum.parse(raw.get("F_bar", 1.0))
        for label, expr in (("F", F), ("G", G), ("F_bar", F_bar)):
            if expr.max_state_index() > i:
                raise ValueError(f"step {i + 1} {label} references a state beyond eta{i + 1}")
        if G.uses_time():
            raise ValueError(f"step {i + 1} G must not depend on time")
        ch = raw.get("channel")
        channel = None if ch is None else UncertaintyChannel(float(ch["period"]), int(ch.get("param_dim", 1)))
        steps.append(PlantStep(F=F, G=lambda bar, _g=G: _g(bar), F_bar=F_bar, channel=channel))
    unknown = set(doc) - {"name", "steps", "G_bounds"}
    if unknown:
        raise ValueError(f"unknown keys in inline plant: {sorted(unknown)}")
    lo, hi = doc.get("G_bounds", (0.5, 3.0))
    return PlantModel(name=doc.get("name", "inline"), steps=tuple(steps), G_lower=lo, G_upper=hi)


PLANTS = {"pendulum": pendulum_example}
