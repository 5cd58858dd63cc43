"""Batch command-line front end.

Subcommands: spectrum | loop-class | features | sweep | models.  All
take a JSON config (--config) validated against the model registry, and
write JSON/CSV artifacts into --out.  Artifacts are byte-deterministic:
keys sorted, floats rendered with the 17-significant-digit round-trip
format.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import (BasepointMismatch, ConfigError, InvalidParams,
                     NhblochError)
from .features import (detect_eps, detect_exceptional_lines, detect_phls,
                       relate_eps, scan)
from .geometry import coordinate_loop
from .models import REGISTRY, available_models, build_model
from .sweeps import SweepSpec, observable_name, run_sweep
from .tracking import (classify, compose_loops, cycle_decomposition,
                       track_loop, winding_numbers)


def _fmt_float(x: float) -> str:
    if isinstance(x, float) and math.isfinite(x):
        return format(x, ".17g")
    return json.dumps(x)


def _canonical_json(obj, indent=0) -> str:
    """Deterministic JSON: sorted keys, fixed float format."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for key in sorted(obj):
            items.append(f'{pad}  "{key}": '
                         + _canonical_json(obj[key], indent + 1).lstrip())
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            return "[]"
        flat = all(isinstance(v, (int, float, str, bool, type(None)))
                   for v in seq)
        if flat:
            return "[" + ", ".join(_canonical_json(v) for v in seq) + "]"
        items = [pad + "  " + _canonical_json(v, indent + 1).lstrip()
                 for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(_canonical_json(obj) + "\n")


# ---------------------------------------------------------------------------
# config handling

TOP_KEYS = {"model", "grid", "loops", "e_ref", "sweep", "tolerances"}


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def model_from_config(cfg: dict):
    block = cfg.get("model")
    if not isinstance(block, dict):
        raise ConfigError("config needs a 'model' object")
    unknown = set(block) - {"name", "params"}
    if unknown:
        raise ConfigError(f"unknown model keys: {sorted(unknown)}")
    name = block.get("name")
    if name not in REGISTRY:
        raise ConfigError(f"unknown model {name!r}; see the models "
                          "subcommand")
    params = block.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("model params must be an object")
    try:
        return build_model(name, params)
    except InvalidParams as exc:
        raise ConfigError(str(exc)) from exc


def grid_from_config(cfg: dict, override=None) -> tuple[int, int]:
    if override is not None:
        return override
    grid = cfg.get("grid", {"nx": 201, "ny": 201})
    unknown = set(grid) - {"nx", "ny"}
    if unknown:
        raise ConfigError(f"unknown grid keys: {sorted(unknown)}")
    try:
        nx, ny = int(grid["nx"]), int(grid["ny"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("grid needs integer nx, ny") from exc
    return nx, ny


def loops_from_config(cfg: dict, topo) -> list:
    loops = cfg.get("loops")
    if not isinstance(loops, list) or not loops:
        raise ConfigError("config needs a non-empty 'loops' array")
    out = []
    for spec in loops:
        unknown = set(spec) - {"axis", "fixed", "n_steps"}
        if unknown:
            raise ConfigError(f"unknown loop keys: {sorted(unknown)}")
        axis = spec.get("axis")
        if axis not in ("x", "y"):
            raise ConfigError("loop axis must be 'x' or 'y'")
        try:
            out.append(coordinate_loop(axis, float(spec.get("fixed", 0.0)),
                                       int(spec.get("n_steps", 512)), topo))
        except NhblochError as exc:
            raise ConfigError(str(exc)) from exc
    return out


# ---------------------------------------------------------------------------
# subcommands

def cmd_models(args) -> int:
    print(_canonical_json(available_models()))
    return 0


def cmd_spectrum(cfg, args) -> int:
    model = model_from_config(cfg)
    nx, ny = grid_from_config(cfg, args.resolution)
    gs = scan(model, (nx, ny), threads=args.threads)
    labels = _propagate_labels(gs)
    path = os.path.join(args.out, "spectrum.csv")
    with open(path, "w") as fh:
        fh.write("kx,ky,band,re_e,im_e\n")
        for i in range(gs.nx):
            for j in range(gs.ny):
                for b in range(gs.n):
                    e = gs.energies[i, j, labels[i, j, b]]
                    fh.write(f"{_fmt_float(float(gs.kxs[i]))},"
                             f"{_fmt_float(float(gs.kys[j]))},{b + 1},"
                             f"{_fmt_float(float(e.real))},"
                             f"{_fmt_float(float(e.imag))}\n")
    print(f"wrote {path}: {gs.nx * gs.ny * gs.n} rows")
    return 0


def _propagate_labels(gs) -> np.ndarray:
    """Band labels propagated row-major from the first node.

    labels[i, j, b] is the storage slot at node (i, j) holding tracked
    band b.  On non-separable structures a seam is unavoidable; the
    spanning tree (row 0 along x, then each column along +y) is fixed so
    output is deterministic.
    """
    nx, ny, n = gs.energies.shape
    labels = np.zeros((nx, ny, n), dtype=int)
    labels[0, 0] = np.arange(n)
    for i in range(1, nx):
        sig = gs.match_x[i - 1, 0]
        labels[i, 0] = sig[labels[i - 1, 0]]
    for i in range(nx):
        for j in range(1, ny):
            sig = gs.match_y[i, j - 1]
            labels[i, j] = sig[labels[i, j - 1]]
    return labels


def _loop_payload(model, loop, e_ref) -> dict:
    tb = track_loop(model, loop)
    lc = classify(tb)
    payload = {
        "basepoint": [tb.basepoint.kx, tb.basepoint.ky],
        "loop": {"wraps": list(tb.loop.wraps),
                 "n_steps": len(tb.loop.vertices) - 1},
        "cycle_type": lc.cycle_type,
        "permutation": list(lc.permutation),
        "trajectories": [[[float(e.real), float(e.imag)] for e in
                          tb.energies[:, b]] for b in range(tb.n)],
    }
    windings = []
    try:
        wl = winding_numbers(model, loop,
                             e_ref=None if e_ref is None else complex(*e_ref))
        for w in wl.windings:
            windings.append({
                "bands": w["bands"], "W": w["W"], "C": w["C"],
                "e_ref": [w["e_ref"].real, w["e_ref"].imag],
                "residual": w["residual"]})
        payload["windings"] = windings
        cycles = []
        for w, cyc in zip(wl.windings,
                          cycle_decomposition(lc.permutation)):
            path = np.concatenate([tb.energies[:, b] for b in _orbit(tb, cyc)])
            cycles.append({"bands": w["bands"], "W": w["W"], "C": w["C"],
                           "energies": [[float(e.real), float(e.imag)]
                                        for e in path]})
        payload["cycles"] = cycles
    except NhblochError as exc:
        payload["windings"] = None
        payload["winding_error"] = f"{type(exc).__name__}: {exc}"
    return payload, tb


def _orbit(tb, cycle):
    j = cycle[0]
    out = []
    for _ in range(len(cycle)):
        out.append(j)
        j = tb.permutation[j]
    return out


def cmd_loop_class(cfg, args) -> int:
    model = model_from_config(cfg)
    loops = loops_from_config(cfg, model.topology)
    e_ref = cfg.get("e_ref")
    if e_ref is not None and (not isinstance(e_ref, list)
                              or len(e_ref) != 2):
        raise ConfigError("e_ref must be [re, im] or null")
    payloads = []
    tracked = []
    for loop in loops:
        payload, tb = _loop_payload(model, loop, e_ref)
        payloads.append(payload)
        tracked.append(tb)
    doc = dict(payloads[0])
    doc["loops"] = payloads
    doc["composed"] = None
    if len(tracked) >= 2:
        try:
            comp = compose_loops(tracked[0], tracked[1])
            doc["composed"] = {"order": "loops[0] then loops[1]",
                               "cycle_type": comp.cycle_type,
                               "permutation": list(comp.permutation)}
        except BasepointMismatch as exc:
            doc["composed"] = {"error": f"BasepointMismatch: {exc}"}
    path = os.path.join(args.out, "loop_class.json")
    write_json(path, doc)
    print(f"wrote {path}: " + ", ".join(p["cycle_type"] for p in payloads))
    return 0


def cmd_features(cfg, args) -> int:
    model = model_from_config(cfg)
    nx, ny = grid_from_config(cfg, args.resolution)
    gs = scan(model, (nx, ny), threads=args.threads)
    eps = detect_eps(gs)
    phls = detect_phls(gs, "real", eps=eps) + detect_phls(gs, "imag", eps=eps)
    phls += detect_exceptional_lines(gs)
    relations = relate_eps(eps)
    doc = {
        "eps": [{"kx": e.kx, "ky": e.ky, "bands": list(e.bands),
                 "residual": e.residual, "order": e.order} for e in eps],
        "phls": [_phl_dict(p) for p in phls],
        "relations": [{"a": r.a, "b": r.b, "relation": r.relation}
                      for r in relations],
    }
    path = os.path.join(args.out, "features.json")
    write_json(path, doc)
    n_real = sum(p.kind == "real" for p in phls)
    n_imag = sum(p.kind == "imag" for p in phls)
    n_el = sum(p.exceptional_line for p in phls)
    print(f"eps: {len(eps)}  real phls: {n_real}  imag phls: {n_imag}  "
          f"exceptional lines: {n_el}")
    return 0


def _phl_dict(p) -> dict:
    if p.endpoints == ("closed",):
        ends = "closed"
    else:
        ends = []
        for e in p.endpoints:
            if e[0] == "ep":
                ends.append({"type": "ep",
                             "id": e[1] if len(e) > 1 else None})
            else:
                ends.append({"type": e[0]})
    return {"kind": p.kind, "bands": list(p.bands),
            "homology": list(p.homology), "endpoints": ends,
            "exceptional_line": bool(p.exceptional_line),
            "points": [[float(x), float(y)] for x, y in p.points]}


def cmd_sweep(cfg, args) -> int:
    block = cfg.get("sweep")
    if not isinstance(block, dict):
        raise ConfigError("config needs a 'sweep' object")
    unknown = set(block) - {"param", "lo", "hi", "n_samples", "observables"}
    if unknown:
        raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
    model_block = cfg.get("model")
    if not isinstance(model_block, dict) or "name" not in model_block:
        raise ConfigError("config needs a 'model' object with a name")
    if model_block["name"] not in REGISTRY:
        raise ConfigError(f"unknown model {model_block['name']!r}")
    nx, ny = grid_from_config(cfg, args.resolution)
    try:
        spec = SweepSpec(model=model_block["name"],
                         base_params=model_block.get("params", {}),
                         param=block["param"], lo=float(block["lo"]),
                         hi=float(block["hi"]),
                         n_samples=int(block.get("n_samples", 11)),
                         observables=block.get("observables",
                                               [{"kind": "ep_count"}]),
                         resolution=(nx, ny))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad sweep spec: {exc}") from exc
    # validate parameter names before computing
    try:
        build_model(spec.model, {**spec.base_params, spec.param: spec.lo})
    except InvalidParams as exc:
        raise ConfigError(str(exc)) from exc
    result = run_sweep(spec, threads=args.threads)
    names = [observable_name(o) for o in spec.observables]
    doc = {
        "spec": {"model": spec.model, "base_params": spec.base_params,
                 "param": spec.param, "lo": spec.lo, "hi": spec.hi,
                 "n_samples": spec.n_samples,
                 "observables": spec.observables,
                 "resolution": list(spec.resolution),
                 "bisection_tol": spec.bisection_tol},
        "samples": [{"value": s.value, "observables": s.observables,
                     "error": s.error} for s in result.samples],
        "transitions": result.transitions,
    }
    jpath = os.path.join(args.out, "sweep.json")
    write_json(jpath, doc)
    cpath = os.path.join(args.out, "sweep.csv")
    with open(cpath, "w") as fh:
        fh.write("parameter," + ",".join(f"\"{n}\"" for n in names) + "\n")
        for s in result.samples:
            row = [_fmt_float(s.value)]
            for n in names:
                v = s.observables.get(n, "error")
                row.append(str(v) if not isinstance(v, str) else f"\"{v}\"")
            fh.write(",".join(row) + "\n")
    print(f"wrote {jpath} and {cpath}: {len(result.transitions)} "
          "transition(s)")
    for t in result.transitions:
        if "value" in t:
            print(f"  {t['observable']}: {t['from']} -> {t['to']} at "
                  f"{t['value']:.6g}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _parse_resolution(text):
    try:
        nx, ny = text.split(",")
        return (int(nx), int(ny))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            "--resolution expects NX,NY") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nhbloch",
        description="Spectral topology of small non-Hermitian Bloch "
                    "Hamiltonians")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("spectrum", cmd_spectrum),
                     ("loop-class", cmd_loop_class),
                     ("features", cmd_features), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--resolution", type=_parse_resolution, default=None)
        p.set_defaults(fn=fn, needs_config=True)
    p = sub.add_parser("models")
    p.set_defaults(fn=cmd_models, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not args.needs_config:
            return args.fn(args)
        cfg = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        return args.fn(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NhblochError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    except Exception as exc:   # noqa: BLE001 - invariant violations
        print(f"internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 4


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
