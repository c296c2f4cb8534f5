"""Fixed-step closed-loop simulation, traces, metrics and variant comparison."""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .controller import BacksteppingController, ControllerGains, control_pipeline
from .plant import PlantModel, Reference, plant_deriv
from .state import AdaptiveState, AugmentedState, FilterState, StateLayout

__all__ = [
    "AugmentedState", "AdaptiveState", "FilterState", "StateLayout",
    "SimulationDiverged", "StageError", "VariantConfig", "Trace", "ClosedLoop",
    "rk4_step", "run_closed_loop", "metrics", "compare_variants", "apply_variant", "VARIANTS",
]

DIVERGENCE_LIMIT = 1e6

VARIANTS = ("developed", "developed-without-composite", "fse-rbfnn-cfb")


class StageError(FloatingPointError):
    """A Runge-Kutta stage produced NaN or Inf."""

    def __init__(self, stage: int, t: float, detail: str = ""):
        self.stage = stage
        self.t = t
        super().__init__(f"non-finite derivative in RK4 stage {stage} at t={t:.6g}" + (f": {detail}" if detail else ""))


class SimulationDiverged(RuntimeError):
    """A state left the ``DIVERGENCE_LIMIT`` box; ``trace`` holds the samples logged so far."""

    def __init__(self, t: float, quantity: str, trace: "Trace"):
        self.t = t
        self.quantity = quantity
        self.trace = trace
        super().__init__(f"simulation diverged at t={t:.6g} ({quantity} exceeded {DIVERGENCE_LIMIT:g})")


def rk4_step(state, t: float, dt: float, dynamics: Callable, k1=None):
    """One classical Runge-Kutta step of ``x' = dynamics(x, t)``.

    ``state`` may be a float, an array or an :class:`AugmentedState` (in which
    case ``dynamics`` receives and returns flat vectors).  ``k1`` may be passed
    when the caller already evaluated ``dynamics(state, t)``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if isinstance(state, AugmentedState):
        layout = state.layout()
        x = rk4_step(state.flatten(), t, dt, dynamics, k1)
        return AugmentedState.unflatten(x, layout)

    def stage(i, x, tt):
        k = dynamics(x, tt)
        if not np.isfinite(np.sum(k)):
            raise StageError(i, tt)
        return k

    h = 0.5 * dt
    if k1 is None:
        k1 = stage(1, state, t)
    k2 = stage(2, state + h * k1, t + h)
    k3 = stage(3, state + h * k2, t + h)
    k4 = stage(4, state + dt * k3, t + dt)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# Variants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariantConfig:
    tag: str = "developed"
    gain_overrides: dict = field(default_factory=dict)
    initial_state: Optional[tuple] = None
    dt: float = 1e-3
    t_final: float = 20.0
    decimation: int = 1

    def __post_init__(self):
        if self.tag not in VARIANTS:
            raise ValueError(f"unknown variant {self.tag!r}; known: {', '.join(VARIANTS)}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final >= 10 * self.dt:
            raise ValueError(f"t_final must be at least 10*dt, got t_final={self.t_final}, dt={self.dt}")
        if int(self.decimation) != self.decimation or self.decimation < 1:
            raise ValueError("decimation must be a positive integer")


def apply_variant(gains: ControllerGains, tag: str, overrides: Optional[dict] = None) -> ControllerGains:
    """Gains for a comparison variant.

    ``developed-without-composite`` drops the prediction-error feedback from
    the weight laws; ``fse-rbfnn-cfb`` additionally removes every fractional
    power term, leaving a linear command-filtered backstepping design.
    """
    if overrides:
        gains = gains.replace_all(**overrides)
    if tag == "developed":
        return gains
    if tag == "developed-without-composite":
        return gains.replace_all(gamma_s=0.0)
    if tag == "fse-rbfnn-cfb":
        return gains.replace_all(gamma_s=0.0, n=0.0, r=0.0, gamma_3=0.0, gamma_n3=0.0,
                                 upsilon_2=0.0, a_2=0.0, b_2=0.0)
    raise ValueError(f"unknown variant {tag!r}")


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------


@dataclass
class Trace:
    """Uniformly sampled closed-loop record.  Per-estimator quantities are keyed by 0-based step."""

    t: np.ndarray
    eta: np.ndarray
    y_d: np.ndarray
    xi: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    u: np.ndarray
    w: dict[int, np.ndarray]
    p_hat: dict[int, np.ndarray]
    e_F: dict[int, np.ndarray]
    s_n: dict[int, np.ndarray]
    omega_norm: dict[int, np.ndarray]

    def __len__(self) -> int:
        return len(self.t)

    @property
    def order(self) -> int:
        return self.eta.shape[1]

    def columns(self) -> list[tuple[str, np.ndarray]]:
        """CSV columns in their fixed order.

        ``t, eta1..etan, y_d, xi1, u``, then per estimator step ``w, p_hat
        (one per parameter), e_F, s_n``, then ``delta1..deltan``, then
        ``omega_norm`` per estimator step.
        """
        cols = [("t", self.t)]
        cols += [(f"eta{j + 1}", self.eta[:, j]) for j in range(self.order)]
        cols += [("y_d", self.y_d), ("xi1", self.xi[:, 0]), ("u", self.u)]
        for i in sorted(self.w):
            tag = i + 1
            cols.append((f"w{tag}", self.w[i]))
            ph = self.p_hat[i]
            if ph.shape[1] == 1:
                cols.append((f"p_hat{tag}", ph[:, 0]))
            else:
                cols += [(f"p_hat{tag}_{j + 1}", ph[:, j]) for j in range(ph.shape[1])]
            cols.append((f"e_F{tag}", self.e_F[i]))
            cols.append((f"s_n{tag}", self.s_n[i]))
        cols += [(f"delta{j + 1}", self.delta[:, j]) for j in range(self.order)]
        cols += [(f"omega_norm{i + 1}", self.omega_norm[i]) for i in sorted(self.omega_norm)]
        return cols

    def to_csv(self) -> str:
        cols = self.columns()
        data = np.column_stack([c for _, c in cols])
        buf = io.StringIO()
        buf.write(",".join(name for name, _ in cols) + "\n")
        for row in data:
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())

    def window_mask(self, window) -> np.ndarray:
        lo, hi = window
        return (self.t >= lo - 1e-12) & (self.t <= hi + 1e-12)


class _TraceBuilder:
    def __init__(self, n: int, est_steps: Sequence[int], param_dims: dict[int, int]):
        self.n = n
        self.rows: list = []
        self.est_steps = list(est_steps)
        self.param_dims = param_dims

    def add(self, t, eta, y_d, out, model: PlantModel, aug: AugmentedState):
        errs = out.errors
        est = {}
        for i in self.est_steps:
            F_true = model.steps[i].F(eta[: i + 1], t)
            est[i] = (
                out.w[i],
                np.array(out.p_hat[i], dtype=float),
                F_true - out.w[i] * out.omega_H[i],
                errs.s_n[i],
                float(np.linalg.norm(aug.adaptive[i].omega_hat)),
            )
        self.rows.append((t, eta.copy(), y_d, errs.xi, errs.sigma, errs.delta, out.u, est))

    def build(self) -> Trace:
        rows = self.rows
        n = self.n
        empty = np.empty((0, n))

        def col(k):
            return np.array([r[k] for r in rows], dtype=float)

        def mat(k):
            return np.array([r[k] for r in rows], dtype=float).reshape(-1, n) if rows else empty

        per = {name: {} for name in ("w", "p_hat", "e_F", "s_n", "omega_norm")}
        for i in self.est_steps:
            per["w"][i] = np.array([r[7][i][0] for r in rows])
            per["p_hat"][i] = np.array([r[7][i][1] for r in rows]).reshape(-1, self.param_dims[i])
            per["e_F"][i] = np.array([r[7][i][2] for r in rows])
            per["s_n"][i] = np.array([r[7][i][3] for r in rows])
            per["omega_norm"][i] = np.array([r[7][i][4] for r in rows])
        return Trace(t=col(0), eta=mat(1), y_d=col(2), xi=mat(3), sigma=mat(4), delta=mat(5), u=col(6), **per)


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------


class ClosedLoop:
    """Plant + controller as one flat ODE ``x' = f(x, t)``."""

    def __init__(self, model: PlantModel, reference: Reference, controller: BacksteppingController):
        controller.check_model(model)
        self.model = model
        self.reference = reference
        self.controller = controller
        shapes = tuple(
            (i, est.node_count, est.fourier_terms, est.param_dim)
            for i, est in sorted(controller.estimators.items())
        )
        self.layout = StateLayout(model.order, shapes)
        sl = self.layout.slices
        self._adaptive_slices = {
            i: (sl[f"omega_hat{i + 1}"], sl[f"l_hat{i + 1}"], sl[f"mu_hat{i + 1}"].start,
                sl[f"mu_n_hat{i + 1}"].start, sl[f"eta_pred{i + 1}"].start)
            for i, _, _, _ in shapes
        }

    def evaluate(self, x: np.ndarray, t: float):
        """Return ``(flat derivative, pipeline output, unflattened state)``."""
        aug = AugmentedState.unflatten(x, self.layout)
        out = control_pipeline(aug, self.model, self.reference, t, self.controller)
        d = out.derivs
        sl = self.layout.slices
        dx = np.empty(self.layout.size)
        dx[sl["eta"]] = plant_deriv(self.model, aug.eta, out.u, t)
        dx[sl["filter_c"]] = [f[0] for f in d.filters]
        dx[sl["filter_d"]] = [f[1] for f in d.filters]
        dx[sl["delta"]] = d.delta
        for i, a in d.adaptive.items():
            s_om, s_l, j_mu, j_mun, j_pred = self._adaptive_slices[i]
            dx[s_om] = a.omega_hat
            dx[s_l] = a.l_hat.reshape(-1)
            dx[j_mu] = a.mu_hat
            dx[j_mun] = a.mu_n_hat
            dx[j_pred] = a.eta_pred
        if not math.isfinite(dx.sum()) and not np.all(np.isfinite(dx)):
            bad = int(np.flatnonzero(~np.isfinite(dx))[0])
            raise StageError(0, t, f"d/dt {self.layout.block_of(bad)} is not finite")
        return dx, out, aug

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.evaluate(x, t)[0]


def run_closed_loop(model: PlantModel, reference: Reference, controller: BacksteppingController,
                    variant: VariantConfig, eta0=None) -> Trace:
    """Integrate the closed loop from 0 to ``variant.t_final`` with fixed-step RK4.

    The state is logged at t=0 and every ``variant.decimation`` steps.  Raises
    :class:`SimulationDiverged` (carrying the partial trace) if any state
    exceeds the divergence limit.
    """
    gains = apply_variant(controller.gains, variant.tag, variant.gain_overrides)
    ctrl = dataclasses.replace(controller, gains=gains)
    if variant.initial_state is not None:
        eta0 = variant.initial_state
    if eta0 is None:
        raise ValueError("run_closed_loop needs an initial plant state")
    loop = ClosedLoop(model, reference, ctrl)
    x = ctrl.initial_state(model, eta0, reference).flatten()

    steps = int(round(variant.t_final / variant.dt))
    est_steps = sorted(ctrl.estimators)
    builder = _TraceBuilder(model.order, est_steps, {i: ctrl.estimators[i].param_dim for i in est_steps})
    dt = variant.dt
    for k in range(steps + 1):
        t = k * dt
        dx, out, aug = loop.evaluate(x, t)
        if k % variant.decimation == 0 or k == steps:
            builder.add(t, aug.eta, reference.y_d(t), out, model, aug)
        if k == steps:
            break
        x = rk4_step(x, t, dt, loop, k1=dx)
        big = np.abs(x)
        if not np.all(big <= DIVERGENCE_LIMIT):
            bad = int(np.flatnonzero(~(big <= DIVERGENCE_LIMIT))[0])
            raise SimulationDiverged((k + 1) * dt, loop.layout.block_of(bad), builder.build())
    return builder.build()


# ---------------------------------------------------------------------------
# Metrics and comparison
# ---------------------------------------------------------------------------


def metrics(trace: Trace, window=None, threshold: float = 0.1) -> dict:
    """Summary numbers over ``window = (t_lo, t_hi)`` (whole trace by default).

    ``settle_time`` is the first sample time after which ``|ξ_1|`` stays below
    ``threshold`` until the end of the window, ``inf`` if it never settles.
    ``switch_duty`` is the fraction of samples where every switch indicator is
    exactly 1.
    """
    if window is None:
        window = (float(trace.t[0]), float(trace.t[-1])) if len(trace) else (0.0, 0.0)
    mask = trace.window_mask(window)
    if not mask.any():
        raise ValueError(f"metrics window {window} contains no samples")
    t = trace.t[mask]
    xi1 = trace.xi[mask, 0]
    eF = [trace.e_F[i][mask] for i in sorted(trace.e_F)]
    w = [trace.w[i][mask] for i in sorted(trace.w)]

    below = np.abs(xi1) < threshold
    if not below[-1]:
        settle = math.inf
    else:
        above = np.flatnonzero(~below)
        settle = float(t[0] if above.size == 0 else t[above[-1] + 1])

    return {
        "rms_tracking": float(np.sqrt(np.mean(xi1**2))),
        "rms_approx_error": float(np.sqrt(np.mean(np.concatenate(eF) ** 2))) if eF else 0.0,
        "max_abs_state": float(np.max(np.abs(trace.eta[mask]))),
        "switch_duty": float(np.mean(np.all(np.array(w) == 1.0, axis=0))) if w else 1.0,
        "settle_time": settle,
    }


@dataclass
class ComparisonRow:
    variant: str
    metrics: Optional[dict]
    error: Optional[str] = None
    trace: Optional[Trace] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None


METRIC_KEYS = ("rms_tracking", "rms_approx_error", "settle_time", "switch_duty")


def compare_variants(model: PlantModel, reference: Reference, controller: BacksteppingController,
                     variants: Sequence[VariantConfig], eta0=None, window=None,
                     threshold: float = 0.1, keep_traces: bool = False) -> list[ComparisonRow]:
    """Run each variant from the same plant, reference and initial state.

    A failing run is reported in its row and does not stop the others.
    ``window`` defaults to each run's full horizon; ``rms_approx_error`` is
    reported over the second half of the horizon when no window is given.
    """
    if len(variants) < 2:
        raise ValueError("compare_variants needs at least two variants")
    rows = []
    for v in variants:
        try:
            tr = run_closed_loop(model, reference, controller, v, eta0)
        except (SimulationDiverged, FloatingPointError, ValueError) as exc:
            rows.append(ComparisonRow(v.tag, None, f"{type(exc).__name__}: {exc}"))
            continue
        m = metrics(tr, window, threshold)
        if window is None:
            m["rms_approx_error"] = metrics(tr, (0.5 * v.t_final, v.t_final), threshold)["rms_approx_error"]
        rows.append(ComparisonRow(v.tag, m, None, tr if keep_traces else None))
    return rows


def comparison_table(rows: Iterable[ComparisonRow]) -> tuple[str, str]:
    """Render rows as ``(csv_text, aligned_text)``."""
    rows = list(rows)
    header = ("variant",) + METRIC_KEYS + ("status",)
    lines = [",".join(header)]
    table = [header]
    for r in rows:
        if r.ok:
            vals = [format(r.metrics[k], ".17g") for k in METRIC_KEYS]
            pretty = [f"{r.metrics[k]:.6g}" for k in METRIC_KEYS]
            status = "ok"
        else:
            vals = pretty = [""] * len(METRIC_KEYS)
            status = "failed: " + r.error
        lines.append(",".join([r.variant, *vals, '"' + status.replace('"', "'") + '"' if "," in status else status]))
        table.append((r.variant, *pretty, status))
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    text = "\n".join("  ".join(cell.ljust(wd) for cell, wd in zip(row, widths)).rstrip() for row in table)
    return "\n".join(lines) + "\n", text + "\n"
