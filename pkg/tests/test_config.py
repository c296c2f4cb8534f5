import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from fsebackstep.config import SCHEMA, ConfigError, ScenarioConfig
from fsebackstep.controller import GainError
from fsebackstep.plots import line_plot_svg, trace_plots
from fsebackstep.sim import run_closed_loop

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_shipped_config_is_the_default():
    assert ScenarioConfig.load(CONFIG_DIR / "pendulum.json") == ScenarioConfig()


def test_round_trip_through_json():
    cfg = ScenarioConfig().with_overrides(dt=5e-4, t_final=3.0, variant="fse-rbfnn-cfb", plots=False)
    again = ScenarioConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_defaults_match_benchmark():
    cfg = ScenarioConfig()
    assert cfg.m_c == Fraction(3, 5)
    assert [s.k for s in cfg.steps] == [8.0, 5.0]
    s2 = cfg.steps[1]
    assert (s2.gamma_omega, s2.gamma_l, s2.gamma_s, s2.gamma_1, s2.gamma_2) == (10.0, 15.0, 5.0, 15.0, 0.001)
    assert cfg.initial_state == (0.5, 0.0)
    assert cfg.plant["fse_period"] == pytest.approx(math.pi)
    sc = cfg.build()
    est = sc.controller.estimators[1]
    assert est.node_count == 216 and est.fourier_terms == 7
    np.testing.assert_array_equal(est.widths, 2.0)


def test_partial_step_gains_merge_over_defaults():
    cfg = ScenarioConfig.from_dict({"gains": {"steps": [{"k": 3}, {"gamma_s": 0}]}})
    assert cfg.steps[0].k == 3.0 and cfg.steps[0].n == 0.5
    assert cfg.steps[1].gamma_s == 0.0 and cfg.steps[1].k == 5.0


@pytest.mark.parametrize("doc, where", [
    ({"bogus": 1}, "bogus"),
    ({"reference": {"freq": 2}}, "freq"),
    ({"gains": {"steps": [{"kk": 1}]}}, "kk"),
    ({"estimators": [{"step": 2, "nodes": 5}]}, "nodes"),
    ({"plant": {"name": "pendulum", "mass": 1}}, "mass"),
])
def test_unknown_keys_rejected(doc, where):
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.from_dict(doc)
    assert where in str(exc.value)


def test_wrong_schema_rejected():
    with pytest.raises(ConfigError, match="schema"):
        ScenarioConfig.from_dict({"schema": "fsebackstep/0"})
    assert ScenarioConfig.from_dict({"schema": SCHEMA}) == ScenarioConfig()


@pytest.mark.parametrize("doc, constraint", [
    ({"gains": {"m_c": "1/2"}}, "m_c in (0.5, 1)"),
    ({"gains": {"m_c": "2/3"}}, "m_c ratio of odd integers"),
    ({"initial_state": [0.5]}, "initial_state"),
    ({"state_switch": [[2.0, 1.0], [1.5, 2.25]]}, "0 < c1 < c2"),
    ({"estimators": []}, "an estimator exactly for each step"),
    ({"estimators": [{"step": 2, "fourier_terms": 6}]}, "fourier_terms"),
    ({"estimators": [{"step": 2, "grid_ranges": [[-1, 1], [-1, 1]]}]}, "grid_ranges"),
    ({"dt": 0}, "dt > 0"),
    ({"t_final": 0.001}, "t_final"),
    ({"variant": "pid"}, "variant"),
    ({"plant": {"name": "cartpole"}}, "plant name"),
])
def test_build_names_violated_constraint(doc, constraint):
    with pytest.raises((ConfigError, GainError)) as exc:
        ScenarioConfig.from_dict(doc).build()
    assert constraint in str(exc.value)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="readable"):
        ScenarioConfig.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        ScenarioConfig.load(bad)


def test_inline_plant_config_runs():
    inline = {
        "steps": [
            {"F": 0, "G": 1, "F_bar": 1},
            {"F": [{"coef": -19.6, "factors": [{"var": "eta1", "fn": "sin"}]}], "G": 2,
             "F_bar": [{"coef": 1.0}, {"coef": 1.0, "factors": [{"var": "eta2", "power": 2}]}],
             "channel": {"period": math.pi, "param_dim": 1}},
        ],
        "G_bounds": [0.5, 3.0],
    }
    cfg = ScenarioConfig.from_dict({"plant": {"inline": inline}, "t_final": 0.5, "dt": 0.01})
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
    sc = cfg.build()
    tr = run_closed_loop(sc.model, sc.reference, sc.controller, sc.variant)
    assert len(tr) == 51 and np.all(np.isfinite(tr.eta))


# -- plots ---------------------------------------------------------------------------


def test_svg_is_self_contained_and_thinned():
    t = np.linspace(0, 20, 20_001)
    svg = line_plot_svg(t, [("a<b", np.sin(t)), ("flat", np.zeros_like(t))], "T & T")
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    assert "href" not in svg and "http" not in svg.replace('xmlns="http://www.w3.org/2000/svg"', "")
    assert "a&lt;b" in svg and "T &amp; T" in svg
    for poly in svg.split("<polyline")[1:]:
        pts = poly.split('points="')[1].split('"')[0].split()
        assert len(pts) <= 2000


def test_svg_handles_constant_and_single_sample():
    assert "<polyline" in line_plot_svg(np.array([0.0]), [("c", np.array([1.0]))], "one")
    with pytest.raises(ValueError):
        line_plot_svg(np.array([]), [("c", np.array([]))], "none")


def test_trace_plots_names():
    cfg = ScenarioConfig().with_overrides(t_final=0.1, dt=0.01)
    sc = cfg.build()
    tr = run_closed_loop(sc.model, sc.reference, sc.controller, sc.variant)
    assert sorted(trace_plots(tr)) == ["approx.svg", "switch.svg", "tracking.svg"]
