"""Closed-loop state container and its flat-vector layout.

Flat layout, in order (steps are 1-based in names, n = plant order):

    eta[0:n]                  plant states η_1..η_n
    filter_c[n-1]             η_{i,c} for i = 2..n
    filter_d[n-1]             η_{i,d} for i = 2..n
    delta[n]                  compensation states δ_1..δ_n
    for each estimator step i, ascending:
        omega_hat[k_i]        output weights
        l_hat[m_i * q_i]      Fourier coefficients, row-major (m_i, q_i)
        mu_hat, mu_n_hat      robust-gain estimates
        eta_pred              serial-parallel predictor state η̂_i
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class FilterState:
    eta_c: float
    eta_d: float


@dataclass
class AdaptiveState:
    omega_hat: np.ndarray
    l_hat: np.ndarray
    mu_hat: float = 0.0
    mu_n_hat: float = 0.0
    eta_pred: float = 0.0

    @classmethod
    def zeros(cls, nodes: int, terms: int, param_dim: int, eta_pred: float = 0.0) -> "AdaptiveState":
        return cls(np.zeros(nodes), np.zeros((terms, param_dim)), 0.0, 0.0, eta_pred)


@dataclass(frozen=True)
class StateLayout:
    """Offsets of every block of the flat closed-loop vector."""

    order: int
    estimator_shapes: tuple[tuple[int, int, int, int], ...]  # (step, k, m, q)
    slices: dict = field(compare=False, repr=False, default_factory=dict)

    def __post_init__(self):
        n = self.order
        sl = {}
        pos = 0

        def take(name, size):
            nonlocal pos
            sl[name] = slice(pos, pos + size)
            pos += size

        take("eta", n)
        take("filter_c", n - 1)
        take("filter_d", n - 1)
        take("delta", n)
        for step, k, m, q in self.estimator_shapes:
            take(f"omega_hat{step + 1}", k)
            take(f"l_hat{step + 1}", m * q)
            take(f"mu_hat{step + 1}", 1)
            take(f"mu_n_hat{step + 1}", 1)
            take(f"eta_pred{step + 1}", 1)
        sl["_size"] = pos
        object.__setattr__(self, "slices", sl)

    @property
    def size(self) -> int:
        return self.slices["_size"]

    def block_of(self, index: int) -> str:
        """Name of the block containing flat position ``index``."""
        for name, s in self.slices.items():
            if name != "_size" and s.start <= index < s.stop:
                return name if s.stop - s.start == 1 else f"{name}[{index - s.start}]"
        raise IndexError(index)


@dataclass
class AugmentedState:
    """Every integrated quantity of the closed loop."""

    eta: np.ndarray
    filters: list[FilterState]
    delta: np.ndarray
    adaptive: dict[int, AdaptiveState]

    def layout(self) -> StateLayout:
        shapes = tuple(
            (step, a.omega_hat.shape[0], a.l_hat.shape[0], a.l_hat.shape[1])
            for step, a in sorted(self.adaptive.items())
        )
        return StateLayout(len(self.eta), shapes)

    def flatten(self) -> np.ndarray:
        parts = [
            np.asarray(self.eta, dtype=float),
            np.array([f.eta_c for f in self.filters], dtype=float),
            np.array([f.eta_d for f in self.filters], dtype=float),
            np.asarray(self.delta, dtype=float),
        ]
        for _, a in sorted(self.adaptive.items()):
            parts.append(np.asarray(a.omega_hat, dtype=float))
            parts.append(np.asarray(a.l_hat, dtype=float).reshape(-1))
            parts.append(np.array([a.mu_hat, a.mu_n_hat, a.eta_pred], dtype=float))
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, vec: np.ndarray, layout: StateLayout) -> "AugmentedState":
        """Inverse of :meth:`flatten`; array fields are views into ``vec``."""
        sl = layout.slices
        if vec.shape != (layout.size,):
            raise ValueError(f"flat state has shape {vec.shape}, layout expects ({layout.size},)")
        fc = vec[sl["filter_c"]]
        fd = vec[sl["filter_d"]]
        adaptive = {}
        for step, k, m, q in layout.estimator_shapes:
            tag = step + 1
            adaptive[step] = AdaptiveState(
                omega_hat=vec[sl[f"omega_hat{tag}"]],
                l_hat=vec[sl[f"l_hat{tag}"]].reshape(m, q),
                mu_hat=float(vec[sl[f"mu_hat{tag}"].start]),
                mu_n_hat=float(vec[sl[f"mu_n_hat{tag}"].start]),
                eta_pred=float(vec[sl[f"eta_pred{tag}"].start]),
            )
        return cls(
            eta=vec[sl["eta"]],
            filters=[FilterState(float(c), float(d)) for c, d in zip(fc, fd)],
            delta=vec[sl["delta"]],
            adaptive=adaptive,
        )

    def copy(self) -> "AugmentedState":
        return AugmentedState.unflatten(self.flatten(), self.layout())
