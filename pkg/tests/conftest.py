import json
import random

import pytest

from hiddenfail.fixtures import NAMES, load_fixture
from hiddenfail.netmodel import parse_case


def case_doc(buses, branches, gens=(), loads=(), slack=(1,), scheme="ZONE123", health=None, base=100.0,
             name="test"):
    """Build a case document.

    ``branches`` items are (id, from, to, x, rating[, status]); ``gens`` are
    (bus, p, p_max); ``loads`` are (bus, p).
    """
    health = health or {}
    doc = {
        "format": "relaycase-1",
        "name": name,
        "base_mw": base,
        "buses": [{"id": b, "is_slack": b in slack} for b in buses],
        "branches": [{"id": i, "from_bus": f, "to_bus": t, "reactance": x, "rating": r,
                      "status": bool(rest[0]) if rest else True} for i, f, t, x, r, *rest in branches],
        "generators": [{"id": k + 1, "bus": b, "p": p, "p_max": pm} for k, (b, p, pm) in enumerate(gens)],
        "loads": [{"id": k + 1, "bus": b, "p": p} for k, (b, p) in enumerate(loads)],
        "protection": [{"branch": br[0], "scheme": scheme, "profile": "ELECTROMECHANICAL",
                        "health": health.get(br[0], {})} for br in branches],
    }
    return doc


def make_case(*args, strict=True, **kw):
    return parse_case(json.dumps(case_doc(*args, **kw)), strict=strict)


def random_case(rng: random.Random, n_bus=None, extra=None):
    """A connected random case with one slack, 1-2 generators able to cover the load."""
    n = n_bus or rng.randint(2, 6)
    branches = []
    k = 1
    for b in range(2, n + 1):
        branches.append((k, rng.randint(1, b - 1), b, round(rng.uniform(0.05, 0.5), 3),
                         round(rng.uniform(30, 150), 1)))
        k += 1
    for _ in range(rng.randint(0, 3) if extra is None else extra):
        f, t = rng.sample(range(1, n + 1), 2)
        branches.append((k, f, t, round(rng.uniform(0.05, 0.5), 3), round(rng.uniform(30, 150), 1)))
        k += 1
    loads = [(b, float(rng.randint(1, 8) * 10)) for b in rng.sample(range(1, n + 1), rng.randint(1, min(3, n)))]
    total = sum(p for _, p in loads)
    gens = [(1, total, total + rng.randint(0, 5) * 10)]
    if n > 2 and rng.random() < 0.5:
        g2 = rng.randint(2, n)
        share = float(rng.randint(0, int(total // 10)) * 10)
        gens = [(1, total - share, total + 50.0), (g2, share, share + rng.randint(0, 5) * 10)]
    return make_case(range(1, n + 1), branches, gens, loads)


@pytest.fixture(params=NAMES)
def fixture_case(request):
    return load_fixture(request.param)
