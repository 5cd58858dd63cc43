"""One-parameter family sweeps: census features and loop classes at each
sample and bisect discrete-observable changes down to the transition
parameter.

Observables are JSON-style dicts:
    {"kind": "ep_count"}
    {"kind": "phl_census"}
    {"kind": "loop_class", "loop": {"axis": "y", "fixed": 0.0,
                                    "n_steps": 512}}
    {"kind": "winding", "loop": {...}, "e_ref": [re, im] | null}
Discrete observables drive bisection; anything continuous is recorded
but never bisected.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NhblochError, NoSignChange
from .features import detect_eps, detect_exceptional_lines, detect_phls, scan
from .geometry import coordinate_loop
from .models import build_model
from .tracking import track_loop, classify, winding_numbers

DEFAULT_RESOLUTION = (201, 201)
DEFAULT_LOOP_STEPS = 512
BISECTION_TOL = 1e-4


@dataclass
class SweepSpec:
    model: str
    param: str
    lo: float
    hi: float
    n_samples: int = 11
    base_params: dict = field(default_factory=dict)
    observables: list = field(default_factory=lambda: [{"kind": "ep_count"}])
    resolution: tuple = DEFAULT_RESOLUTION
    bisection_tol: float = BISECTION_TOL

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("sweep range needs lo < hi")
        if self.param in self.base_params:
            raise ValueError(f"swept parameter {self.param!r} also fixed in "
                             "base_params")
        for obs in self.observables:
            observable_name(obs)  # validates


@dataclass
class SweepSample:
    value: float
    observables: dict
    error: str | None = None


@dataclass
class SweepResult:
    spec: SweepSpec
    samples: list[SweepSample]
    transitions: list[dict]


def observable_name(obs: dict) -> str:
    kind = obs.get("kind")
    if kind == "ep_count":
        return "ep_count"
    if kind == "phl_census":
        return "phl_census"
    if kind in ("loop_class", "winding"):
        loop = obs.get("loop") or {}
        axis = loop.get("axis", "y")
        fixed = loop.get("fixed", 0.0)
        return f"{kind}({axis}@{fixed:g})"
    raise ValueError(f"unknown observable {obs!r}")


def _census_string(phls, els) -> str:
    """Canonical census: sorted kind/|homology| tags of every line."""
    tags = []
    for p in phls:
        tags.append(f"{p.kind}:{abs(p.homology[0])},{abs(p.homology[1])}")
    for p in els:
        tags.append(f"el:{abs(p.homology[0])},{abs(p.homology[1])}")
    return "|".join(sorted(tags)) if tags else "none"


def _eval_observable(model, obs: dict, resolution, loop_steps, cache) -> str | int:
    kind = obs["kind"]
    if kind in ("ep_count", "phl_census"):
        if "scan" not in cache:
            cache["scan"] = scan(model, resolution)
        gs = cache["scan"]
        if kind == "ep_count":
            return len(detect_eps(gs))
        phls = detect_phls(gs, "real") + detect_phls(gs, "imag")
        els = detect_exceptional_lines(gs)
        return _census_string(phls, els)
    loop_spec = obs.get("loop") or {}
    loop = coordinate_loop(loop_spec.get("axis", "y"),
                           float(loop_spec.get("fixed", 0.0)),
                           int(loop_spec.get("n_steps", loop_steps)),
                           model.topology)
    if kind == "loop_class":
        return classify(track_loop(model, loop)).cycle_type
    e_ref = obs.get("e_ref")
    lc = winding_numbers(model, loop,
                         e_ref=None if e_ref is None else complex(*e_ref))
    return ";".join(f"({w['W']},{w['C']})" for w in lc.windings)


def evaluate_sample(spec: SweepSpec, value: float,
                    resolution=None) -> dict:
    """All observables of one sweep sample (scan shared between them)."""
    params = dict(spec.base_params)
    params[spec.param] = value
    model = build_model(spec.model, params)
    cache: dict = {}
    out = {}
    for obs in spec.observables:
        out[observable_name(obs)] = _eval_observable(
            model, obs, resolution or spec.resolution, DEFAULT_LOOP_STEPS,
            cache)
    return out


def find_transition(eval_fn, lo: float, hi: float, tol: float = BISECTION_TOL,
                    max_iter: int = 80, refine_fn=None) -> float:
    """Bisect a discrete observable change to within tol.

    eval_fn(value) -> hashable observable.  refine_fn, when given, is a
    higher-resolution evaluator consulted once per bracket whenever the
    midpoint value matches neither endpoint.
    """
    v_lo = eval_fn(lo)
    v_hi = eval_fn(hi)
    if v_lo == v_hi:
        raise NoSignChange(f"observable equals {v_lo!r} at both endpoints")
    refined_once = False
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        v_mid = eval_fn(mid)
        if v_mid not in (v_lo, v_hi) and refine_fn is not None \
                and not refined_once:
            refined_once = True
            v_mid = refine_fn(mid)
        if v_mid == v_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def run_sweep(spec: SweepSpec, threads: int = 1) -> SweepResult:
    """Evaluate the sweep grid, then bisect every adjacent observable
    change; per-sample failures invalidate the sample, not the sweep."""
    values = np.linspace(spec.lo, spec.hi, spec.n_samples)

    def one(v: float) -> SweepSample:
        try:
            return SweepSample(value=float(v),
                               observables=evaluate_sample(spec, float(v)))
        except NhblochError as exc:
            return SweepSample(value=float(v), observables={},
                               error=f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(one, values))
    else:
        samples = [one(v) for v in values]

    transitions = []
    names = [observable_name(obs) for obs in spec.observables]
    for name, obs in zip(names, spec.observables):
        for a, b in zip(samples, samples[1:]):
            if a.error or b.error:
                continue
            va, vb = a.observables[name], b.observables[name]
            if va == vb:
                continue

            def eval_fn(v, _obs=obs):
                params = dict(spec.base_params)
                params[spec.param] = v
                model = build_model(spec.model, params)
                return _eval_observable(model, _obs, spec.resolution,
                                        DEFAULT_LOOP_STEPS, {})

            def refine_fn(v, _obs=obs):
                params = dict(spec.base_params)
                params[spec.param] = v
                model = build_model(spec.model, params)
                res = (2 * spec.resolution[0] - 1, 2 * spec.resolution[1] - 1)
                return _eval_observable(model, _obs, res,
                                        DEFAULT_LOOP_STEPS, {})

            try:
                at = find_transition(eval_fn, a.value, b.value,
                                     tol=spec.bisection_tol,
                                     refine_fn=refine_fn)
            except NhblochError as exc:
                transitions.append({
                    "observable": name, "between": [a.value, b.value],
                    "error": f"{type(exc).__name__}: {exc}"})
                continue
            transitions.append({
                "observable": name, "value": float(at),
                "from": va, "to": vb,
                "tolerance": spec.bisection_tol})
    return SweepResult(spec=spec, samples=samples, transitions=transitions)
