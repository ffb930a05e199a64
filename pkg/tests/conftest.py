import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stericpb.closure import BulkState, IonSpecies  # noqa: E402
from stericpb.solute import MOLAR  # noqa: E402


def molar_species(z, side, conc, name=""):
    return IonSpecies(z, side ** 3, conc * MOLAR, name)


@pytest.fixture
def paper_bulk():
    """0.1 M binary salt, ion sides 2.76/3.62 A, water side 2.75 A."""
    return BulkState([molar_species(1, 2.76, 0.1, "cation"),
                      molar_species(-1, 3.62, 0.1, "anion")], 2.75 ** 3)


@pytest.fixture
def bikerman_bulk():
    """One cation with v = v0 and v c = 0.1, so gamma_inf = 0.9."""
    return BulkState([IonSpecies(1, 1.0, 0.1)], 1.0)


@pytest.fixture
def symmetric_bulk():
    return BulkState([IonSpecies(1, 27.0, 0.002), IonSpecies(-1, 27.0, 0.002)], 27.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
