"""Renderers for the three figure kinds.

All figures use a fixed canvas and color cycle so rerendering the same
artifacts is pixel-identical: band 1 red, band 2 blue, band 3 gray;
real PHLs solid yellow-orange, imaginary PHLs dashed orange, branch cuts
red, exceptional points filled circles.
"""

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .schemas import (FEATURES_SCHEMA, FIGURE_SPEC_SCHEMA,
                      LOOP_CLASS_SCHEMA, SchemaError, load_json,
                      load_spectrum_csv, load_sweep_csv, validate)

BAND_COLORS = ["#c62828", "#1565c0", "#757575", "#2e7d32", "#6a1b9a",
               "#ef6c00"]
PHL_REAL_COLOR = "#f9a825"
PHL_IMAG_COLOR = "#ef6c00"
CUT_COLOR = "#d32f2f"
EP_COLOR = "#b71c1c"
START_MARKERS = ["o", "s", "^", "D", "v", "P"]
FIGSIZE = (7.0, 5.0)
DPI = 150


def render(spec: dict, base_dir: str = ".") -> str:
    """Render one figure spec; returns the output path.

    Input paths inside the spec resolve relative to base_dir.
    """
    validate(spec, FIGURE_SPEC_SCHEMA, "figure spec")

    def resolve(key):
        path = spec["inputs"].get(key)
        if path is None:
            raise SchemaError(f"figure spec: kind {spec['kind']!r} needs "
                              f"inputs.{key}")
        return path if os.path.isabs(path) else os.path.join(base_dir, path)

    out = spec["out"]
    if not os.path.isabs(out):
        out = os.path.join(base_dir, out)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    kind = spec["kind"]
    if kind == "surface3d":
        _render_surface(spec, resolve, out)
    elif kind == "complex_plane":
        _render_complex_plane(spec, resolve, out)
    else:
        _render_sweep_curve(spec, resolve, out)
    return out


def _spectrum_grids(rows):
    """Regrid spectrum.csv rows into per-band surfaces."""
    kxs = np.array(sorted({r[0] for r in rows}))
    kys = np.array(sorted({r[1] for r in rows}))
    bands = sorted({int(r[2]) for r in rows})
    ix = {v: i for i, v in enumerate(kxs)}
    iy = {v: i for i, v in enumerate(kys)}
    grids = {b: np.full((len(kxs), len(kys)), np.nan + 0j, dtype=complex)
             for b in bands}
    for kx, ky, band, re_e, im_e in rows:
        grids[int(band)][ix[kx], iy[ky]] = re_e + 1j * im_e
    for b, g in grids.items():
        if np.isnan(g.real).any():
            raise SchemaError(f"spectrum csv: band {b} does not cover the "
                              "grid")
    return kxs, kys, grids


def _nearest_band_z(kxs, kys, grids, bands, pt, component):
    i = int(np.argmin(np.abs(kxs - pt[0])))
    j = int(np.argmin(np.abs(kys - pt[1])))
    vals = [getattr(grids[b][i, j], component) for b in bands if b in grids]
    return float(np.mean(vals)) if vals else 0.0


def _render_surface(spec, resolve, out):
    rows = load_spectrum_csv(resolve("spectrum_csv"))
    component = spec.get("component", "real")
    kxs, kys, grids = _spectrum_grids(rows)
    selected = spec.get("bands") or sorted(grids)
    overlays = {"phl": True, "ep": True, "branch_cut": True}
    overlays.update(spec.get("overlays", {}))

    fig = plt.figure(figsize=FIGSIZE, dpi=DPI)
    ax = fig.add_subplot(projection="3d")
    KX, KY = np.meshgrid(kxs, kys, indexing="ij")
    for b in selected:
        if b not in grids:
            raise SchemaError(f"figure spec: band {b} not present in the "
                              "spectrum")
        z = getattr(grids[b], component)
        ax.plot_surface(KX, KY, z, color=BAND_COLORS[(b - 1) % 6],
                        alpha=0.55, linewidth=0, antialiased=False,
                        rstride=1, cstride=1)

    feat_path = spec["inputs"].get("features_json")
    if feat_path is not None:
        feats = load_json(resolve("features_json"), FEATURES_SCHEMA,
                          "features")
        if overlays["phl"] or overlays["branch_cut"]:
            for phl in feats["phls"]:
                is_cut = (phl["endpoints"] != "closed"
                          and isinstance(phl["endpoints"], list)
                          and any(e.get("type") == "ep"
                                  for e in phl["endpoints"]))
                if is_cut and not overlays["branch_cut"]:
                    continue
                if not is_cut and not overlays["phl"]:
                    continue
                pts = np.array(phl["points"])
                zs = [_nearest_band_z(kxs, kys, grids, phl["bands"], p,
                                      component) for p in pts]
                # break the polyline at zone-boundary wraps
                jump = np.hypot(*np.abs(np.diff(pts, axis=0)).T) > 1.0
                segments = np.split(np.arange(len(pts)),
                                    np.nonzero(jump)[0] + 1)
                color = CUT_COLOR if is_cut else (
                    PHL_REAL_COLOR if phl["kind"] != "imag"
                    else PHL_IMAG_COLOR)
                style = "--" if phl["kind"] == "imag" else "-"
                for seg in segments:
                    if len(seg) < 2:
                        continue
                    ax.plot(pts[seg, 0], pts[seg, 1],
                            np.array(zs)[seg] + 0.02, style, color=color,
                            linewidth=2.0)
        if overlays["ep"]:
            for ep in feats["eps"]:
                z = _nearest_band_z(kxs, kys, grids, ep["bands"],
                                    (ep["kx"], ep["ky"]), component)
                ax.scatter([ep["kx"]], [ep["ky"]], [z + 0.02],
                           color=EP_COLOR, s=45, marker="o",
                           depthshade=False)

    ax.set_xlabel("kx")
    ax.set_ylabel("ky")
    ax.set_zlabel(f"{'Re' if component == 'real' else 'Im'} E")
    ax.view_init(elev=20, azim=-60)
    fig.savefig(out)
    plt.close(fig)


def _render_complex_plane(spec, resolve, out):
    doc = load_json(resolve("loop_class_json"), LOOP_CLASS_SCHEMA,
                    "loop class")
    loop = doc["loops"][0]
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    cycles = loop.get("cycles")
    if cycles:
        curves = [(np.array(c["energies"]),
                   f"bands {c['bands']} (W={c['W']}, C={c['C']})")
                  for c in cycles]
    else:
        curves = [(np.array(t), f"band {b + 1}")
                  for b, t in enumerate(loop["trajectories"])]
    for idx, (pts, label) in enumerate(curves):
        color = BAND_COLORS[idx % 6]
        ax.plot(pts[:, 0], pts[:, 1], "-", color=color, linewidth=1.4,
                label=label)
        ax.plot(pts[0, 0], pts[0, 1], START_MARKERS[idx % 6], color="black",
                markerfacecolor=color, markersize=8)
    ax.set_xlabel("Re E")
    ax.set_ylabel("Im E")
    ax.set_title(f"cycle type {doc['cycle_type']}")
    ax.axhline(0.0, color="0.8", linewidth=0.6)
    ax.axvline(0.0, color="0.8", linewidth=0.6)
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(out)
    plt.close(fig)


def _render_sweep_curve(spec, resolve, out):
    params, columns = load_sweep_csv(resolve("sweep_csv"))
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    for idx, (name, values) in enumerate(sorted(columns.items())):
        try:
            ys = [float(v) for v in values]
            ax.step(params, ys, where="mid", color=BAND_COLORS[idx % 6],
                    label=name)
        except ValueError:
            levels = sorted(set(values))
            ys = [levels.index(v) for v in values]
            ax.step(params, ys, where="mid", color=BAND_COLORS[idx % 6],
                    label=f"{name} (categorical)")
            ax.set_yticks(range(len(levels)))
            ax.set_yticklabels(levels, fontsize=7)
    ax.set_xlabel("parameter")
    ax.legend(loc="best", fontsize=8)
    fig.savefig(out)
    plt.close(fig)
