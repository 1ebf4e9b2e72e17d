import numpy as np
import pytest

from freqreg import tracking

FRL_ENV = ("FRL_OUT", "FRL_DATA_DIR", "FRL_DEBUG_LOG", "FRL_LOG_DIR", "FRL_PROFILE_MEMORY", "FRL_PARALLELISM")


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in FRL_ENV:
        monkeypatch.delenv(name, raising=False)
    tracking.clear_tracking()
    yield
    tracking.clear_tracking()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_dir(tmp_path):
    """Fixture files (toy IDX set, manifest, config, complexity PPMs) under tmp_path/fixtures."""
    from nodes import fixtures

    out = str(tmp_path / "fixtures")
    fixtures.run(out)
    return out


@pytest.fixture
def toy_cfg(toy_dir):
    """Toy ExperimentConfig loaded from the emitted toy_config.json."""
    from freqreg.experiment import load_config

    return load_config(f"{toy_dir}/toy_config.json")
