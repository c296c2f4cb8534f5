"""Scenario configuration: a versioned JSON document mapped onto model objects.

Every key is optional; missing keys fall back to the built-in pendulum
scenario.  Unknown keys anywhere in the document are errors.  ``to_dict``
emits the fully populated form, so ``from_dict(cfg.to_dict()) == cfg``.

Document layout::

    {
      "schema": "fsebackstep/1",
      "plant": {"name": "pendulum", "fse_period": 3.14159..., "bound": "sqrt"}
               | {"inline": {"steps": [...], "G_bounds": [lo, hi]}},
      "reference": {"amplitude": 1, "omega": 1, "phase": 0, "offset": 0},
      "initial_state": [0.5, 0.0],
      "variant": "developed",
      "compare_variants": ["developed", ...],
      "gains": {"m_c": "3/5", "steps": [{"k": 8, ...}, {"k": 5, ...}]},
      "estimators": [{"step": 2, "fourier_terms": 7, "grid_ranges": [[lo, hi], ...],
                      "grid_per_dim": 6, "width": 2.0, "param_switch": [[3.0, 4.5]]}],
      "state_switch": [[1.5, 2.25], [1.5, 2.25]],
      "switch_order": 2,
      "dt": 0.001, "t_final": 20.0, "decimation": 1, "settle_threshold": 0.1,
      "output_dir": "out", "plots": true
    }

Steps are 1-based in the document.  Per-step gain dicts are merged over the
default gains of the same step (or the generic defaults for steps beyond the
built-in plant's order).  Inline plant term lists use the grammar of
:func:`fsebackstep.plant.inline_plant`.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

from .controller import BacksteppingController, ControllerGains, GainError, StepGains, parse_exponent
from .mathkit import FourierBasis, FseRbfEstimator, SwitchRegion
from .plant import PENDULUM_BOUNDS, PLANTS, PlantModel, Reference, inline_plant, sine_reference
from .sim import VARIANTS, VariantConfig

SCHEMA = "fsebackstep/1"

TOP_KEYS = (
    "schema", "plant", "reference", "initial_state", "variant", "compare_variants", "gains",
    "estimators", "state_switch", "switch_order", "dt", "t_final", "decimation",
    "settle_threshold", "output_dir", "plots",
)
ESTIMATOR_KEYS = ("step", "fourier_terms", "grid_ranges", "grid_per_dim", "width", "param_switch")
REFERENCE_KEYS = ("amplitude", "omega", "phase", "offset")
NAMED_PLANT_KEYS = ("name", "fse_period", "bound")

# gains given for the pendulum benchmark; everything else is a StepGains default
PENDULUM_STEP_GAINS = (
    {"k": 8.0, "r": 1.0, "n": 0.5},
    {"k": 5.0, "r": 1.0, "n": 0.5, "gamma_omega": 10.0, "gamma_l": 15.0, "gamma_s": 5.0,
     "gamma_1": 15.0, "gamma_n1": 15.0, "gamma_2": 0.001, "gamma_n2": 0.001},
)


class ConfigError(ValueError):
    """Invalid scenario document; ``constraint`` names the violated rule."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        super().__init__(f"invalid config: {constraint}" + (f" ({detail})" if detail else ""))


def _reject_unknown(raw: dict, allowed, where: str) -> None:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object", f"got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"no unknown keys in {where}", f"unknown: {', '.join(unknown)}")


def _float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} is a number", f"got {value!r}")
    return float(value)


def _pairs(value, name: str) -> tuple[tuple[float, float], ...]:
    try:
        out = tuple((_float(a, name), _float(b, name)) for a, b in value)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name} is a list of [low, high] pairs", f"got {value!r}") from None
    return out


def _fraction_text(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}"


@dataclass(frozen=True)
class EstimatorConfig:
    step: int
    fourier_terms: int = 7
    grid_ranges: tuple[tuple[float, float], ...] = ((-1.5, 1.5), (-1.5, 1.5), (-3.0, 3.0))
    grid_per_dim: int = 6
    width: float = 2.0
    param_switch: tuple[tuple[float, float], ...] = ((3.0, 4.5),)

    @classmethod
    def from_dict(cls, raw: dict) -> "EstimatorConfig":
        _reject_unknown(raw, ESTIMATOR_KEYS, "estimators[]")
        if "step" not in raw:
            raise ConfigError("estimators[] entries name their step")
        kw: dict[str, Any] = {"step": int(raw["step"])}
        if "fourier_terms" in raw:
            kw["fourier_terms"] = int(raw["fourier_terms"])
        if "grid_ranges" in raw:
            kw["grid_ranges"] = _pairs(raw["grid_ranges"], "grid_ranges")
        if "grid_per_dim" in raw:
            kw["grid_per_dim"] = int(raw["grid_per_dim"])
        if "width" in raw:
            kw["width"] = _float(raw["width"], "width")
        if "param_switch" in raw:
            kw["param_switch"] = _pairs(raw["param_switch"], "param_switch")
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "fourier_terms": self.fourier_terms,
            "grid_ranges": [list(r) for r in self.grid_ranges],
            "grid_per_dim": self.grid_per_dim,
            "width": self.width,
            "param_switch": [list(r) for r in self.param_switch],
        }


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run: built from a validated :class:`ScenarioConfig`."""

    model: PlantModel
    reference: Reference
    eta0: tuple[float, ...]
    controller: BacksteppingController
    variant: VariantConfig


@dataclass(frozen=True)
class ScenarioConfig:
    plant: dict = field(default_factory=lambda: {"name": "pendulum", "fse_period": math.pi, "bound": "sqrt"})
    reference: dict = field(default_factory=lambda: {"amplitude": 1.0, "omega": 1.0, "phase": 0.0, "offset": 0.0})
    initial_state: tuple[float, ...] = (0.5, 0.0)
    variant: str = "developed"
    compare_variants: tuple[str, ...] = VARIANTS
    m_c: Fraction = Fraction(3, 5)
    steps: tuple[StepGains, ...] = tuple(StepGains(**g) for g in PENDULUM_STEP_GAINS)
    estimators: tuple[EstimatorConfig, ...] = (EstimatorConfig(step=2),)
    state_switch: tuple[tuple[float, float], ...] = ((1.5, 2.25), (1.5, 2.25))
    switch_order: int = 2
    dt: float = 1e-3
    t_final: float = 20.0
    decimation: int = 1
    settle_threshold: float = 0.1
    output_dir: str = "out"
    plots: bool = True

    # -- parsing ---------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        _reject_unknown(raw, TOP_KEYS, "the top level")
        schema = raw.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"schema is {SCHEMA!r}", f"got {schema!r}")
        base = cls()
        kw: dict[str, Any] = {}

        if "plant" in raw:
            kw["plant"] = _parse_plant(raw["plant"])
        if "reference" in raw:
            _reject_unknown(raw["reference"], REFERENCE_KEYS, "reference")
            ref = dict(base.reference)
            ref.update({k: _float(v, f"reference.{k}") for k, v in raw["reference"].items()})
            kw["reference"] = ref
        if "initial_state" in raw:
            kw["initial_state"] = tuple(_float(v, "initial_state") for v in raw["initial_state"])
        for key in ("variant", "output_dir"):
            if key in raw:
                if not isinstance(raw[key], str):
                    raise ConfigError(f"{key} is a string", f"got {raw[key]!r}")
                kw[key] = raw[key]
        if "compare_variants" in raw:
            kw["compare_variants"] = tuple(str(v) for v in raw["compare_variants"])
        if "gains" in raw:
            g = raw["gains"]
            _reject_unknown(g, ("m_c", "steps"), "gains")
            if "m_c" in g:
                try:
                    kw["m_c"] = parse_exponent(g["m_c"])
                except (ValueError, TypeError, ZeroDivisionError):
                    raise ConfigError("m_c is a ratio such as \"3/5\"", f"got {g['m_c']!r}") from None
            if "steps" in g:
                kw["steps"] = tuple(_parse_step_gains(i, s) for i, s in enumerate(g["steps"]))
        if "estimators" in raw:
            kw["estimators"] = tuple(EstimatorConfig.from_dict(e) for e in raw["estimators"])
        if "state_switch" in raw:
            kw["state_switch"] = _pairs(raw["state_switch"], "state_switch")
        for key, conv in (("switch_order", int), ("decimation", int)):
            if key in raw:
                v = raw[key]
                if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
                    raise ConfigError(f"{key} is an integer", f"got {v!r}")
                kw[key] = conv(v)
        for key in ("dt", "t_final", "settle_threshold"):
            if key in raw:
                kw[key] = _float(raw[key], key)
        if "plots" in raw:
            if not isinstance(raw["plots"], bool):
                raise ConfigError("plots is true or false", f"got {raw['plots']!r}")
            kw["plots"] = raw["plots"]
        return dataclasses.replace(base, **kw)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config file is readable", str(exc)) from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config file is valid JSON", str(exc)) from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "plant": copy.deepcopy(self.plant),
            "reference": dict(self.reference),
            "initial_state": list(self.initial_state),
            "variant": self.variant,
            "compare_variants": list(self.compare_variants),
            "gains": {"m_c": _fraction_text(self.m_c), "steps": [s.to_dict() for s in self.steps]},
            "estimators": [e.to_dict() for e in self.estimators],
            "state_switch": [list(r) for r in self.state_switch],
            "switch_order": self.switch_order,
            "dt": self.dt,
            "t_final": self.t_final,
            "decimation": self.decimation,
            "settle_threshold": self.settle_threshold,
            "output_dir": self.output_dir,
            "plots": self.plots,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Apply command-line overrides (``None`` values are ignored)."""
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    # -- validation and construction --------------------------------------

    def gains(self) -> ControllerGains:
        return ControllerGains(self.m_c, self.steps)

    def build_plant(self) -> tuple[PlantModel, Reference]:
        ref = sine_reference(**self.reference)
        if "inline" in self.plant:
            try:
                return inline_plant(self.plant["inline"]), ref
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError("inline plant is well formed", str(exc)) from None
        name = self.plant["name"]
        model, _, _ = PLANTS[name](fse_period=self.plant["fse_period"], bound=self.plant["bound"])
        return model, ref

    def validate(self) -> None:
        """Check every design constraint; raises :class:`ConfigError` or :class:`GainError`."""
        self.build()

    def build(self) -> Scenario:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant is one of {', '.join(VARIANTS)}", f"got {self.variant!r}")
        for tag in self.compare_variants:
            if tag not in VARIANTS:
                raise ConfigError(f"compare_variants are among {', '.join(VARIANTS)}", f"got {tag!r}")
        model, ref = self.build_plant()
        n = model.order

        gains = self.gains()
        if len(gains.steps) != n:
            raise ConfigError("one gain set per plant step", f"plant order {n}, {len(gains.steps)} gain sets")
        gains.validate()

        if len(self.initial_state) != n:
            raise ConfigError("initial_state has one entry per plant state",
                              f"got {len(self.initial_state)} for order {n}")
        if not all(math.isfinite(v) for v in self.initial_state):
            raise ConfigError("initial_state is finite")
        if self.switch_order < 1:
            raise ConfigError("switch_order >= 1", f"got {self.switch_order}")
        if len(self.state_switch) != n:
            raise ConfigError("state_switch has one region per plant state",
                              f"got {len(self.state_switch)} for order {n}")
        state_regions = tuple(self._region(c1, c2, "state_switch") for c1, c2 in self.state_switch)

        est_by_step = {}
        for e in self.estimators:
            if e.step in est_by_step:
                raise ConfigError("one estimator per step", f"step {e.step} repeated")
            est_by_step[e.step] = e
        wanted = {i + 1 for i in model.uncertain_steps()}
        if set(est_by_step) != wanted:
            raise ConfigError("an estimator exactly for each step with an uncertainty channel",
                              f"channels on steps {sorted(wanted)}, estimators on {sorted(est_by_step)}")
        estimators, param_regions = {}, {}
        for step, e in sorted(est_by_step.items()):
            ch = model.steps[step - 1].channel
            if len(e.grid_ranges) != step + ch.param_dim:
                raise ConfigError("grid_ranges cover the step's states and parameters",
                                  f"step {step} needs {step + ch.param_dim} ranges, got {len(e.grid_ranges)}")
            if len(e.param_switch) != ch.param_dim:
                raise ConfigError("param_switch has one region per parameter",
                                  f"step {step} needs {ch.param_dim}, got {len(e.param_switch)}")
            if not e.width > 0:
                raise ConfigError("width > 0", f"step {step}: got {e.width}")
            if e.grid_per_dim < 1:
                raise ConfigError("grid_per_dim >= 1", f"step {step}: got {e.grid_per_dim}")
            for lo, hi in e.grid_ranges:
                if not lo < hi:
                    raise ConfigError("grid range low < high", f"step {step}: got [{lo}, {hi}]")
            try:
                fourier = FourierBasis(e.fourier_terms, ch.period)
            except ValueError as exc:
                raise ConfigError("fourier_terms is odd and positive", str(exc)) from None
            estimators[step - 1] = FseRbfEstimator.on_grid(e.grid_ranges, e.grid_per_dim, e.width, fourier, step)
            param_regions[step - 1] = tuple(self._region(c1, c2, "param_switch") for c1, c2 in e.param_switch)

        try:
            variant = VariantConfig(self.variant, dt=self.dt, t_final=self.t_final,
                                    decimation=self.decimation, initial_state=tuple(self.initial_state))
        except ValueError as exc:
            msg = str(exc)
            constraint = "dt > 0" if "dt must" in msg else "t_final >= 10*dt" if "t_final" in msg else "decimation >= 1"
            raise ConfigError(constraint, msg) from None
        if not self.settle_threshold > 0:
            raise ConfigError("settle_threshold > 0", f"got {self.settle_threshold}")
        ctrl = BacksteppingController(gains, estimators, state_regions, param_regions)
        ctrl.check_model(model)
        return Scenario(model, ref, tuple(self.initial_state), ctrl, variant)

    def _region(self, c1: float, c2: float, name: str) -> SwitchRegion:
        if not 0 < c1 < c2:
            raise ConfigError(f"{name}: 0 < c1 < c2", f"got c1={c1}, c2={c2}")
        return SwitchRegion(c1, c2, self.switch_order)


def _parse_plant(raw) -> dict:
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, dict):
        raise ConfigError("plant is a name or an object", f"got {raw!r}")
    if "inline" in raw:
        _reject_unknown(raw, ("inline",), "plant")
        if not isinstance(raw["inline"], dict) or "steps" not in raw["inline"]:
            raise ConfigError("inline plant has a steps list")
        _reject_unknown(raw["inline"], ("name", "steps", "G_bounds"), "plant.inline")
        try:
            inline_plant(raw["inline"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError("inline plant is well formed", str(exc)) from None
        return {"inline": copy.deepcopy(raw["inline"])}
    _reject_unknown(raw, NAMED_PLANT_KEYS, "plant")
    name = raw.get("name", "pendulum")
    if name not in PLANTS:
        raise ConfigError(f"plant name is one of {', '.join(sorted(PLANTS))}", f"got {name!r}")
    bound = raw.get("bound", "sqrt")
    if bound not in PENDULUM_BOUNDS:
        raise ConfigError(f"plant bound is one of {', '.join(sorted(PENDULUM_BOUNDS))}", f"got {bound!r}")
    period = _float(raw.get("fse_period", math.pi), "plant.fse_period")
    if not period > 0:
        raise ConfigError("plant.fse_period > 0", f"got {period}")
    return {"name": name, "fse_period": period, "bound": bound}


def _parse_step_gains(index: int, raw: dict) -> StepGains:
    names = [f.name for f in dataclasses.fields(StepGains)]
    _reject_unknown(raw, names, f"gains.steps[{index}]")
    merged = dict(PENDULUM_STEP_GAINS[index]) if index < len(PENDULUM_STEP_GAINS) else {}
    for k, v in raw.items():
        if k in ("gamma_omega", "gamma_l") and isinstance(v, list):
            merged[k] = v
        else:
            merged[k] = _float(v, f"gains.steps[{index}].{k}")
    try:
        return StepGains(**merged)
    except GainError as exc:
        raise ConfigError(exc.constraint, f"step {index + 1}") from None


def default_config() -> ScenarioConfig:
    return ScenarioConfig()
