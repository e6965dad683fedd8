"""Node position generators: grid, uniform, simple diffusion and biased random."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import ConfigError, NodeRecord, Role, Topology

KINDS = ("grid", "uniform", "diffusion", "biased")
_ALIASES = {
    "grid": "grid",
    "uniform": "uniform",
    "uniformrandom": "uniform",
    "diffusion": "diffusion",
    "simplediffusion": "diffusion",
    "biased": "biased",
    "biasedrandom": "biased",
}


def canonical_kind(kind):
    key = str(kind).replace("_", "").replace("-", "").lower()
    if key not in _ALIASES:
        raise ConfigError("placement", f"unknown placement {kind!r}; expected one of {KINDS}")
    return _ALIASES[key]


@dataclass(frozen=True)
class PlacementSpec:
    kind: str
    n: int
    area: tuple = (100.0, 100.0)
    seed: int = 0
    sigma: Optional[float] = None
    bias: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))


def _gaussian_in_area(rng, count, cx, cy, sigma, w, h):
    out = np.empty((0, 2))
    while len(out) < count:
        need = count - len(out)
        pts = rng.normal((cx, cy), sigma, size=(2 * need + 8, 2))
        ok = (pts[:, 0] >= 0) & (pts[:, 0] <= w) & (pts[:, 1] >= 0) & (pts[:, 1] <= h)
        out = np.vstack([out, pts[ok][:need]])
    return out


def _uniform(rng, count, w, h):
    return np.column_stack([rng.uniform(0.0, w, count), rng.uniform(0.0, h, count)])


def generate_placement(spec):
    """Ordered positions; the first one is the sink at the centre of the area."""
    if spec.n < 2:
        raise ConfigError("nodes", f"need at least 2 nodes, got {spec.n}")
    w, h = float(spec.area[0]), float(spec.area[1])
    if w <= 0 or h <= 0:
        raise ConfigError("area", "area dimensions must be positive")
    cx, cy = w / 2.0, h / 2.0
    rest = spec.n - 1

    if spec.kind == "grid":
        m = math.ceil(math.sqrt(spec.n))
        lattice = [((c + 0.5) * w / m, (r + 0.5) * h / m) for r in range(m) for c in range(m)]
        centre = min(range(len(lattice)),
                     key=lambda k: ((lattice[k][0] - cx) ** 2 + (lattice[k][1] - cy) ** 2, k))
        sink = lattice.pop(centre)
        return [sink] + lattice[:rest]

    rng = np.random.default_rng(spec.seed)
    sigma = spec.sigma if spec.sigma is not None else w / 4.0
    if sigma <= 0:
        raise ConfigError("sigma", "sigma must be positive")
    if spec.kind == "uniform":
        pts = _uniform(rng, rest, w, h)
    elif spec.kind == "diffusion":
        pts = _gaussian_in_area(rng, rest, cx, cy, sigma, w, h)
    else:
        if not 0.0 <= spec.bias <= 1.0:
            raise ConfigError("bias", "bias must lie in [0, 1]")
        near = rng.random(rest) < spec.bias
        pts = np.empty((rest, 2))
        pts[near] = _gaussian_in_area(rng, int(near.sum()), cx, cy, sigma, w, h)
        pts[~near] = _uniform(rng, int((~near).sum()), w, h)
    return [(cx, cy)] + [(float(x), float(y)) for x, y in pts]


def build_topology(spec, radio_range, initial_energy, target=None):
    """Wrap placement output in a Topology; node 0 is the sink."""
    nodes = []
    for i, (x, y) in enumerate(generate_placement(spec)):
        role = Role.SINK if i == 0 else Role.TARGET if i == target else Role.SENSOR
        nodes.append(NodeRecord(i, x, y, initial_energy, role))
    return Topology(nodes, radio_range, spec.area)
