import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from satroa.design import PlantFD, place_poles  # noqa: E402
from satroa.roa import certify_static  # noqa: E402
from satroa.spectral import ModeShape, OperatorSpec, build_modal_system  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).parent / "fixtures"
CONFIGS = ROOT / "configs"
LEVEL = 2.0
POLES = {"41": [-1.0, -1.0], "42": [-0.1, -0.2]}

# Filled by test_acceptance.py, printed at the end of the session.
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def heat_spec():
    return OperatorSpec(length=2.0, reaction=10.0, inputs=(ModeShape.parse("e1 + e2"),), sat_level=LEVEL)


@pytest.fixture(scope="session")
def heat_modal(heat_spec):
    return build_modal_system(heat_spec, 50)


@pytest.fixture(scope="session")
def heat_plant(heat_modal):
    return PlantFD(heat_modal.Amat, heat_modal.Bn)


@pytest.fixture(scope="session")
def closed_loops(heat_plant):
    return {k: heat_plant.with_gain(place_poles(heat_plant, p)) for k, p in POLES.items()}


@pytest.fixture(scope="session")
def certificates(closed_loops, heat_modal):
    return {k: certify_static(p, LEVEL, modal=heat_modal) for k, p in closed_loops.items()}


@pytest.fixture(scope="session")
def published_triples():
    return {k: json.loads((FIXTURES / f"published_{k}.json").read_text()) for k in POLES}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2} {name}: {'PASS' if ok else 'FAIL'}  ({detail})")


def inside_samples(cert, count, rng, scale=0.99):
    """Points in the certified ellipsoid: boundary samples shrunk by a random factor up to ``scale``."""
    from satroa.roa import ellipsoid_boundary_samples

    pts = ellipsoid_boundary_samples(cert.P, cert.rho, count, rng)
    return pts * (scale * np.sqrt(rng.uniform(0.05, 1.0, size=(count, 1))))
