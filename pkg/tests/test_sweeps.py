import math

import numpy as np
import pytest

import nhbloch as nb
from nhbloch.errors import NoSignChange
from nhbloch.features import detect_eps, scan
from nhbloch.sweeps import (SweepSpec, evaluate_sample, find_transition,
                            observable_name, run_sweep)

PI = math.pi


def test_find_transition_step_function():
    at = find_transition(lambda v: v >= 0.37, 0.0, 1.0, tol=1e-6)
    assert abs(at - 0.37) < 1e-5


def test_find_transition_no_sign_change():
    with pytest.raises(NoSignChange):
        find_transition(lambda v: 1, 0.0, 1.0)


def test_find_transition_third_value_refine():
    calls = []

    def coarse(v):
        calls.append(v)
        if 0.49 < v < 0.51:
            return "smeared"
        return v >= 0.5

    def refined(v):
        return v >= 0.5

    at = find_transition(coarse, 0.0, 1.0, tol=1e-5, refine_fn=refined)
    # a single refinement retry localizes to within the smeared width
    assert abs(at - 0.5) < 0.011


def test_observable_names():
    assert observable_name({"kind": "ep_count"}) == "ep_count"
    assert observable_name({"kind": "loop_class",
                            "loop": {"axis": "y", "fixed": 1.5}}) \
        == "loop_class(y@1.5)"
    with pytest.raises(ValueError):
        observable_name({"kind": "nope"})


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(model="hn_folded", param="eps0", lo=1.0, hi=0.5)
    with pytest.raises(ValueError):
        SweepSpec(model="hn_folded", param="eps0", lo=0.0, hi=1.0,
                  base_params={"eps0": 0.3})
    with pytest.raises(ValueError):
        SweepSpec(model="hn_folded", param="eps0", lo=0.0, hi=1.0,
                  observables=[{"kind": "bogus"}])


def test_evaluate_sample_shares_scan():
    spec = SweepSpec(model="two_band_alt", param="eps0", lo=0.5, hi=1.0,
                     base_params={"t_x": 1.0, "t_y": 0.5},
                     observables=[{"kind": "ep_count"},
                                  {"kind": "phl_census"}],
                     resolution=(64, 64))
    out = evaluate_sample(spec, 0.8)
    assert out["ep_count"] == 0
    assert "real" in out["phl_census"] and "imag" in out["phl_census"]


def test_class_change_sweep_crosses_ep():
    # as the swept parameter grows, an exceptional point passes the
    # ky-loop at kx = pi/2 and the loop class flips
    spec = SweepSpec(
        model="three_band_interp", param="s2", lo=0.30, hi=0.37,
        n_samples=3, base_params={"s1": 0.5},
        observables=[{"kind": "loop_class",
                      "loop": {"axis": "y", "fixed": PI / 2,
                               "n_steps": 384}}],
        resolution=(101, 101), bisection_tol=2e-4)
    res = run_sweep(spec)
    classes = [s.observables["loop_class(y@1.5708)"] for s in res.samples
               if not s.error]
    assert classes[0] == "1^1 2^1"
    assert classes[-1] == "1^3"
    hits = [t for t in res.transitions if "value" in t]
    assert len(hits) == 1
    s2_star = hits[0]["value"]
    # cross-validate: at the transition parameter an EP sits on the loop
    gs = scan(nb.make_three_band_interp(0.5, s2_star), (201, 201))
    eps = detect_eps(gs)
    d = min(abs(abs(e.kx) - PI / 2) for e in eps)
    assert d < 2 * max(gs.cell)


def test_sweep_marks_failing_samples():
    # the middle sample puts the exceptional point exactly on the loop,
    # which tracking must refuse
    lo = math.sqrt(3) / 2 - 0.01
    hi = math.sqrt(3) / 2 + 0.01
    spec = SweepSpec(
        model="two_band_alt", param="eps0", lo=lo, hi=hi, n_samples=3,
        base_params={"t_x": 1.0, "t_y": 0.5},
        observables=[{"kind": "loop_class",
                      "loop": {"axis": "y", "fixed": PI, "n_steps": 256}}],
        resolution=(64, 64))
    res = run_sweep(spec)
    errors = [s.error for s in res.samples if s.error]
    assert any("NearDegeneracyUnresolved" in e for e in errors)
    assert len(res.samples) == 3
