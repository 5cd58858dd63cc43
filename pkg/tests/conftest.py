"""Shared fixtures: expensive grid scans are computed once per session."""

import numpy as np
import pytest

import nhbloch as nb
from nhbloch.features import scan


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def scan_cache():
    cache = {}

    def get(name, factory, params, resolution):
        key = (name, tuple(sorted(params.items())), resolution)
        if key not in cache:
            cache[key] = scan(factory(**params), resolution)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def gs_three_band_05_00(scan_cache):
    return scan_cache("tbi", nb.make_three_band_interp,
                      {"s1": 0.5, "s2": 0.0}, (201, 201))


@pytest.fixture(scope="session")
def gs_three_band_05_03(scan_cache):
    return scan_cache("tbi", nb.make_three_band_interp,
                      {"s1": 0.5, "s2": 0.3}, (201, 201))


@pytest.fixture(scope="session")
def gs_three_band_025_00(scan_cache):
    return scan_cache("tbi", nb.make_three_band_interp,
                      {"s1": 0.25, "s2": 0.0}, (201, 201))


@pytest.fixture(scope="session")
def gs_two_band_alt_10(scan_cache):
    return scan_cache("tba", nb.make_two_band_alt,
                      {"t_x": 1.0, "t_y": 0.5, "eps0": 1.0}, (201, 201))


@pytest.fixture(scope="session")
def ep_cache():
    cache = {}

    def get(gs):
        if id(gs) not in cache:
            from nhbloch.features import detect_eps
            cache[id(gs)] = detect_eps(gs)
        return cache[id(gs)]

    return get
