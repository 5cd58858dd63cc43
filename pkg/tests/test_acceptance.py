"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line (run with -s to see them inline).

All tolerances are pinned here; grids stay at or below 401 per axis and
loops at or below 4096 steps.
"""

import math

import numpy as np
import pytest

import nhbloch as nb
from nhbloch.eigen import DVector, eigensystem, two_band_energies
from nhbloch.features import (detect_eps, detect_exceptional_lines,
                              detect_phls, scan)
from nhbloch.geometry import SpaceTopology, coordinate_loop
from nhbloch.models import build_model
from nhbloch.sweeps import SweepSpec, run_sweep
from nhbloch.tracking import (classify, compose_loops, cycle_type_string,
                              track_loop, winding_numbers)

T = SpaceTopology.TORUS
PI = math.pi

TORUS_TEST_MATRIX = [
    ("three_band_interp", {"s1": 0.5, "s2": 0.0}, (201, 201)),
    ("three_band_interp", {"s1": 0.5, "s2": 0.3}, (201, 201)),
    ("three_band_interp", {"s1": 0.25, "s2": 0.0}, (201, 201)),
    ("bilayer_square", {"alpha": 1.0}, (101, 101)),
    ("bilayer_square", {"alpha": 3.0}, (101, 101)),
    ("hn_folded", {"m": 2}, (101, 101)),
    ("hn_folded", {"m": 2, "eps0": 0.5}, (101, 101)),
    ("hn_folded", {"m": 3, "gamma0": 0.5}, (101, 101)),
    ("two_band_alt", {"eps0": 0.8}, (101, 101)),
    ("two_band_alt", {"eps0": 1.0}, (201, 201)),
]


def report(name: str, ok: bool, detail: str = ""):
    tail = f" ({detail})" if detail else ""
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}{tail}")
    assert ok, f"{name}{tail}"


def test_eq2_two_band_oracle():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        d = DVector(tuple(rng.normal(size=3)), tuple(rng.normal(size=3)),
                    complex(rng.normal(), rng.normal()))
        want = np.sort_complex(np.array(two_band_energies(d)))
        got = np.sort_complex(eigensystem(d.matrix(),
                                          allow_defective=True).values)
        worst = max(worst, float(np.abs(want - got).max()))
    report("two-band analytic oracle (1000 random d-vectors)",
           worst < 1e-10, f"worst multiset distance {worst:.2e}")


def test_fig2_reproduction(gs_three_band_05_00, ep_cache):
    model = build_model("three_band_interp", {"s1": 0.5, "s2": 0.0})
    classes = []
    for kx in np.linspace(-PI, PI, 10, endpoint=False):
        tb = track_loop(model, coordinate_loop("y", float(kx), 384, T))
        classes.append(classify(tb).cycle_type)
    ok_classes = all(c == "1^1 2^1" for c in classes)

    gs = gs_three_band_05_00
    eps = ep_cache(gs)
    real = detect_phls(gs, "real", eps=eps)
    imag = detect_phls(gs, "imag", eps=eps)
    real_23 = [p for p in real if p.bands == (2, 3)]
    ok_phl = (len(real) == 1 and len(real_23) == 1
              and abs(real_23[0].homology[0]) == 1
              and real_23[0].homology[1] == 0)
    report("separable-band geometry: ky-loop classes",
           ok_classes, "1^1 2^1 at 10 kx values")
    report("separable-band geometry: no EPs", len(eps) == 0)
    report("separable-band geometry: one real line between bands 2-3 "
           "wrapping kx", ok_phl,
           f"homology {real_23[0].homology if real_23 else None}")
    report("separable-band geometry: three imaginary lines",
           len(imag) == 3, f"found {len(imag)}")


def _ep_boundary_distance(eps):
    return min(PI - max(abs(e.kx), abs(e.ky)) for e in eps)


def test_fig3_ep_pair_and_motion(gs_three_band_05_03, ep_cache):
    eps = ep_cache(gs_three_band_05_03)
    pair_ok = (len(eps) == 2 and all(e.bands == (2, 3) for e in eps))
    report("EP pair creation: exactly 2 EPs between the two lowest bands",
           pair_ok,
           f"{[(round(e.kx, 3), round(e.ky, 3), e.bands) for e in eps]}")

    dists = [_ep_boundary_distance(eps)]
    for s2 in (0.335, 0.37):
        gs = scan(build_model("three_band_interp",
                              {"s1": 0.5, "s2": s2}), (201, 201))
        e2 = detect_eps(gs)
        assert len(e2) == 2
        dists.append(_ep_boundary_distance(e2))
    monotone = dists[0] > dists[1] > dists[2]
    report("EP pair creation: EPs approach the zone boundary monotonically",
           monotone, f"distances {[round(d, 3) for d in dists]}")


def test_fig3_class_coexistence():
    model = build_model("three_band_interp", {"s1": 0.5, "s2": 0.3})
    c0 = classify(track_loop(model, coordinate_loop("y", 0.0, 384, T)))
    cq = classify(track_loop(model, coordinate_loop("y", PI / 2, 384, T)))
    both = {c0.cycle_type, cq.cycle_type}
    report("EP pair creation: both ky-loop classes coexist",
           both == {"1^3", "1^1 2^1"},
           f"kx=0 -> {c0.cycle_type}, kx=pi/2 -> {cq.cycle_type}")
    # loops along kx stay trivial in this configuration
    for ky in (-2.0, 0.9):
        ck = classify(track_loop(model, coordinate_loop("x", ky, 384, T)))
        assert ck.cycle_type == "1^3"


@pytest.mark.xfail(
    strict=True,
    reason="stated kx assignment is unattainable for the printed "
           "Hamiltonian: the exchange region is |kx| > kx_EP ~ 1.19, so "
           "the classes at kx=0 and kx=pi/2 come out swapped relative to "
           "the stated values; see /root/notes/decisions.md")
def test_fig3_class_assignment_as_stated():
    model = build_model("three_band_interp", {"s1": 0.5, "s2": 0.3})
    c0 = classify(track_loop(model, coordinate_loop("y", 0.0, 384, T)))
    cq = classify(track_loop(model, coordinate_loop("y", PI / 2, 384, T)))
    ok = (c0.cycle_type == "1^1 2^1" and cq.cycle_type == "1^3")
    verdict = "PASS" if ok else \
        "FAIL (documented discrepancy, see decisions ledger)"
    print("[acceptance] EP pair creation: literal class-to-kx assignment: "
          + verdict)
    assert ok


def test_fig5_reproduction(gs_three_band_025_00, ep_cache):
    gs = gs_three_band_025_00
    eps = ep_cache(gs)
    ok_eps = len(eps) == 2 and all(e.bands == (1, 2) for e in eps)
    report("intersected geometry: 2 EPs between bands 1-2", ok_eps,
           f"{[(round(e.kx, 3), round(e.ky, 3), e.bands) for e in eps]}")
    phl_23 = detect_phls(gs, "real", band_pair=(2, 3), eps=eps)
    report("intersected geometry: one real line between bands 2-3",
           len(phl_23) == 1, f"found {len(phl_23)}")

    model = build_model("three_band_interp", {"s1": 0.25, "s2": 0.0})
    ta = track_loop(model, coordinate_loop("x", -PI, 384, T))
    tb = track_loop(model, coordinate_loop("y", -PI, 384, T))
    ca, cb = classify(ta).cycle_type, classify(tb).cycle_type
    allowed = {"1^3", "1^1 2^1"}
    report("intersected geometry: individual loop classes",
           ca in allowed and cb in allowed, f"kx: {ca}, ky: {cb}")
    comp = compose_loops(ta, tb)
    report("intersected geometry: composed kx-then-ky class is 3^1",
           comp.cycle_type == "3^1", comp.cycle_type)


def test_winding_table():
    cases = [
        ("m=1", nb.make_hn_folded(1), None, (1, 1)),
        ("m=2", nb.make_hn_folded(2), None, (1, 2)),
        ("m=3", nb.make_hn_folded(3), None, (1, 3)),
        ("m=3 NNN", nb.make_hn_folded(3, gamma0=0.5), 1.5, (2, 3)),
    ]
    for tag, model, e_ref, want in cases:
        lc = winding_numbers(model, coordinate_loop("x", 0.0, 1024, T),
                             e_ref=e_ref)
        cyc = [w for w in lc.windings if w["C"] == want[1]]
        ok = (len(cyc) == 1 and (cyc[0]["W"], cyc[0]["C"]) == want
              and cyc[0]["residual"] < 1e-6 * 2 * PI)
        report(f"winding table {tag}: (W, C) = {want}", ok,
               f"residual {cyc[0]['residual']:.2e}" if cyc else "missing")


def test_transition_values():
    spec = SweepSpec(model="hn_folded", param="eps0", lo=0.9, hi=1.1,
                     n_samples=3, base_params={"m": 2, "t_x": 1.0,
                                               "t_y": 1.0},
                     observables=[{"kind": "phl_census"}],
                     resolution=(128, 128))
    res = run_sweep(spec)
    hits = [t["value"] for t in res.transitions if "value" in t]
    ok = bool(hits) and all(abs(v - 1.0) < 1e-3 for v in hits)
    report("line-conversion transition at 1.000 +/- 1e-3", ok,
           f"found {[round(v, 5) for v in hits]}")

    spec = SweepSpec(model="two_band_alt", param="eps0", lo=0.8, hi=1.0,
                     n_samples=3, base_params={"t_x": 1.0, "t_y": 0.5},
                     observables=[{"kind": "ep_count"}],
                     resolution=(201, 201))
    res = run_sweep(spec)
    hits = [t["value"] for t in res.transitions if "value" in t]
    ok = bool(hits) and all(abs(v - math.sqrt(3) / 2) < 1e-3 for v in hits)
    report("EP-creation transition at 0.8660 +/- 1e-3", ok,
           f"found {[round(v, 5) for v in hits]}")


def test_removable_vs_protected_lines():
    gs1 = scan(nb.make_bilayer_square(1.0), (101, 101))
    ring = detect_phls(gs1, "real")
    ok_ring = (len(ring) == 1 and ring[0].homology == (0, 0)
               and len(detect_eps(gs1)) == 0)
    gs3 = scan(nb.make_bilayer_square(3.0), (101, 101))
    ok_gone = (detect_phls(gs3, "real") == []
               and len(detect_eps(gs3)) == 0)
    report("removable line: contractible ring at alpha=1, absent at "
           "alpha=3, no EPs", ok_ring and ok_gone)

    rng = np.random.default_rng(7)
    base = nb.make_hn_folded(2)
    survived = 0
    for _ in range(20):
        delta = 0.05 * rng.uniform(0, 1, 2) * np.exp(
            2j * PI * rng.uniform(0, 1, 2))

        def sampler(kx, ky, _d=delta, _b=base):
            return _b.sample(kx, ky) + np.diag(_d)

        def batch(kxs, kys, _d=delta, _b=base):
            h = _b.sample_batch(kxs, kys)
            h[..., 0, 0] += _d[0]
            h[..., 1, 1] += _d[1]
            return h

        pert = base.with_sampler("hn_folded_perturbed", sampler, batch)
        phls = detect_phls(scan(pert, (96, 96)), "real")
        if len(phls) == 1 and phls[0].homology[0] == 0 \
                and abs(phls[0].homology[1]) == 1:
            survived += 1
    report("protected line: homology (0, +-1) survives 20 onsite "
           "perturbations of magnitude 0.05", survived == 20,
           f"{survived}/20")


def test_compactness_parity():
    failures = []
    for name, params, res in TORUS_TEST_MATRIX:
        gs = scan(build_model(name, params), res)
        eps = detect_eps(gs)
        per_pair = {}
        for e in eps:
            per_pair[e.bands] = per_pair.get(e.bands, 0) + 1
        for pair, count in per_pair.items():
            if count % 2 != 0:
                failures.append((name, params, pair, count))
    report("compactness parity: even EP count per band pair on every "
           "torus instance", not failures, str(failures) if failures else
           f"{len(TORUS_TEST_MATRIX)} instances")


def test_property_suites():
    rng = np.random.default_rng(11)
    # composition law on tracked loops and on raw permutations
    model = build_model("three_band_interp", {"s1": 0.25, "s2": 0.0})
    ta = track_loop(model, coordinate_loop("x", -PI, 256, T))
    tb = track_loop(model, coordinate_loop("y", -PI, 256, T))
    comp = compose_loops(ta, tb)
    prod = tuple(tb.permutation[ta.permutation[j]] for j in range(3))
    ok_comp = comp.cycle_type == cycle_type_string(prod)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        p = tuple(rng.permutation(n))
        q = tuple(rng.permutation(n))
        ok_comp &= cycle_type_string(tuple(q[p[j]] for j in range(n))) \
            == cycle_type_string(tuple(q[p[j]] for j in range(n)))
    report("property: permutation composition law", ok_comp)

    ok_conj = True
    for _ in range(200):
        n = int(rng.integers(2, 7))
        perm = tuple(rng.permutation(n))
        sigma = list(rng.permutation(n))
        inv = [0] * n
        for i, s in enumerate(sigma):
            inv[s] = i
        conj = tuple(sigma[perm[inv[j]]] for j in range(n))
        ok_conj &= cycle_type_string(conj) == cycle_type_string(perm)
    report("property: conjugacy invariance of cycle types", ok_conj)

    ok_steps = True
    for name, params, axis, fixed in [
            ("hn_folded", {"m": 2}, "x", 0.0),
            ("hn_folded", {"m": 3, "gamma0": 0.5}, "x", 0.9),
            ("three_band_interp", {"s1": 0.5, "s2": 0.0}, "y", 1.3),
            ("three_band_interp", {"s1": 0.5, "s2": 0.3}, "y", 2.5),
            ("two_band_alt", {"eps0": 1.0}, "y", 0.4),
            ("bilayer_square", {"alpha": 1.0}, "y", 0.4)]:
        m = build_model(name, params)
        p1 = track_loop(m, coordinate_loop(axis, fixed, 256, T)).permutation
        p2 = track_loop(m, coordinate_loop(axis, fixed, 512, T)).permutation
        ok_steps &= p1 == p2
    report("property: discretization stability under step doubling",
           ok_steps)

    ok_per = True
    worst = 0.0
    for name, params, _res in TORUS_TEST_MATRIX:
        m = build_model(name, params)
        for _ in range(30):
            kx, ky = rng.uniform(-PI, PI, 2)
            base = np.sort_complex(
                eigensystem(m.sample(kx, ky), allow_defective=True).values)
            for dkx, dky in ((2 * PI, 0.0), (0.0, 2 * PI)):
                shifted = np.sort_complex(eigensystem(
                    m.sample(kx + dkx, ky + dky),
                    allow_defective=True).values)
                worst = max(worst, float(np.abs(shifted - base).max()))
        ok_per &= worst < 1e-10
    report("property: eigenvalue-multiset periodicity across the zoo",
           ok_per, f"worst {worst:.2e}")
