import numpy as np
import pytest

from adaptagg.model import IreTech, StorageTech, TechCatalog, ThermalTech, base_catalog
from adaptagg.timeseries import HorizonData, SynthConfig, synthesize


def toy_data(hours, seed=0, load=(20.0, 60.0)):
    """Random hourly load and solar/wind factors with a day/night pattern."""
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    solar = np.clip(np.sin(np.pi * ((t % 24) - 6) / 12), 0, None) * rng.uniform(0.4, 1.0, hours)
    wind = rng.uniform(0.05, 0.9, hours)
    return HorizonData(load=rng.uniform(*load, hours), profiles={"solar": solar, "wind": wind})


def toy_catalog(thermal=True, n_units=3, unit_size=10.0, min_up=2, min_down=2, efficiency=0.9):
    ire = (IreTech("solar", 1000.0), IreTech("wind", 1500.0))
    sto = (StorageTech("battery", 200.0, 70.0, 5.0, efficiency),)
    the = ()
    if thermal:
        the = (ThermalTech("thermal", 800.0, 30.0, 50.0, 0.3, 1.0, min_up, min_down, n_units, unit_size),)
    return TechCatalog(ire, sto, the)


def weekly_toy(weeks=4, seed=7):
    """Synthetic weeks with the default generator, for slice-level tests."""
    return synthesize(SynthConfig(years=weeks * 168 / 8760), seed=seed)


@pytest.fixture
def linear_catalog():
    return base_catalog().without_thermal()
