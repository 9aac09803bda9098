from __future__ import annotations

import numpy as np
import pytest

from coordest.functions import max_fn, min_fn, one_sided_rg_fn, or_fn, rg_fn
from coordest.model import InstanceSet, TauScheme

# Two instances over eight items; the running example throughout the suite.
DEMO_IDS = tuple(str(i) for i in range(1, 9))
DEMO_MATRIX = np.array(
    [
        [1.0, 3.0],
        [0.0, 2.0],
        [4.0, 1.0],
        [1.0, 0.0],
        [0.0, 2.0],
        [2.0, 3.0],
        [3.0, 1.0],
        [1.0, 0.0],
    ]
)
DEMO_PROBS_1 = (0.25, 0.00, 1.00, 0.25, 0.00, 0.50, 0.75, 0.25)
DEMO_PROBS_2 = (0.75, 0.50, 0.25, 0.00, 0.50, 0.75, 0.25, 0.00)


@pytest.fixture(scope="session")
def demo_data() -> InstanceSet:
    return InstanceSet(DEMO_IDS, DEMO_MATRIX)


@pytest.fixture(scope="session")
def scheme4() -> TauScheme:
    return TauScheme.pps(4.0, r=2)


@pytest.fixture(scope="session")
def scheme1() -> TauScheme:
    return TauScheme.pps(1.0, r=2)


def builtin_functions(r: int = 2):
    fns = [max_fn(r), min_fn(r), or_fn(r), rg_fn(1.0, r), rg_fn(2.0, r)]
    if r >= 2:
        fns.append(one_sided_rg_fn(2.0, 0, 1, r))
        fns.append(one_sided_rg_fn(1.0, 1, 0, r))
    return fns


def random_vector(rng: np.random.Generator, r: int = 2, scale: float = 2.5):
    v = rng.uniform(0.0, scale, size=r)
    # sprinkle exact zeros; zero entries exercise the never-sampled paths
    v[rng.random(r) < 0.25] = 0.0
    return tuple(float(x) for x in v)


def random_scheme(rng: np.random.Generator, r: int = 2) -> TauScheme:
    return TauScheme.pps([float(t) for t in rng.uniform(0.5, 4.0, size=r)])


def random_triples(seed: int, n: int, r: int = 2):
    """(vector, function, scheme) triples for property sweeps."""
    rng = np.random.default_rng(seed)
    fns = builtin_functions(r)
    out = []
    for k in range(n):
        out.append((random_vector(rng, r), fns[k % len(fns)], random_scheme(rng, r)))
    return out
