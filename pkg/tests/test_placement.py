import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wsn_forge.domain import ConfigError
from wsn_forge.placement import PlacementSpec, build_topology, canonical_kind, generate_placement


def _near_sink(pts, radius):
    cx, cy = pts[0]
    return sum(math.hypot(x - cx, y - cy) <= radius for x, y in pts[1:])


def test_grid_of_nine():
    pts = generate_placement(PlacementSpec("grid", 9, (90, 90)))
    assert pts[0] == (45.0, 45.0)
    xs = sorted({p[0] for p in pts})
    assert xs == [15.0, 45.0, 75.0]
    assert len(set(pts)) == 9


def test_uniform_is_deterministic():
    spec = PlacementSpec("UniformRandom", 100, (100, 100), seed=7)
    assert generate_placement(spec) == generate_placement(spec)
    assert generate_placement(spec) != generate_placement(PlacementSpec("uniform", 100, (100, 100), seed=8))


def test_diffusion_is_denser_near_sink():
    w = 100.0
    d = generate_placement(PlacementSpec("diffusion", 1000, (w, w), seed=1, sigma=w / 8))
    u = generate_placement(PlacementSpec("uniform", 1000, (w, w), seed=1))
    assert _near_sink(d, w / 8) > _near_sink(u, w / 8)


def test_density_ordering_over_seeds():
    counts = {k: [] for k in ("diffusion", "biased", "uniform")}
    for seed in range(50):
        for k in counts:
            counts[k].append(_near_sink(generate_placement(PlacementSpec(k, 100, (100, 100), seed)), 25))
    means = {k: np.mean(v) for k, v in counts.items()}
    assert means["diffusion"] >= means["biased"] >= means["uniform"]


def test_aliases_and_errors():
    assert canonical_kind("Simple_Diffusion") == "diffusion"
    assert canonical_kind("biased-random") == "biased"
    with pytest.raises(ConfigError):
        canonical_kind("hexagonal")
    with pytest.raises(ConfigError):
        generate_placement(PlacementSpec("uniform", 1))
    with pytest.raises(ConfigError):
        generate_placement(PlacementSpec("biased", 10, bias=1.5))


def test_build_topology_roles():
    t = build_topology(PlacementSpec("uniform", 20, (100, 100), 3), 25, 5.0, target=4)
    assert t.sink == 0 and t.target == 4
    assert (t.xs[0], t.ys[0]) == (50.0, 50.0)


@given(st.sampled_from(["grid", "uniform", "diffusion", "biased"]), st.integers(2, 200),
       st.integers(0, 10_000), st.floats(5, 500), st.floats(5, 500))
def test_positions_stay_in_area(kind, n, seed, w, h):
    pts = generate_placement(PlacementSpec(kind, n, (w, h), seed))
    assert len(pts) == n
    assert all(0 <= x <= w and 0 <= y <= h for x, y in pts)
