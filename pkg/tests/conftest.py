import numpy as np
import pytest

from mmi_lab import (DetectorConfig, Layout, SourceConfig, balanced_splitter,
                     identity_matrix, measured_chip_matrix, sin2_envelope)


@pytest.fixture(scope="session")
def chip():
    return measured_chip_matrix()


@pytest.fixture(scope="session")
def splitter():
    return balanced_splitter()


@pytest.fixture(scope="session")
def identity4():
    return identity_matrix(4)


@pytest.fixture(scope="session")
def envelope():
    return sin2_envelope(300.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture(scope="session")
def default_source():
    return SourceConfig()


@pytest.fixture(scope="session")
def default_detectors():
    return DetectorConfig()


@pytest.fixture(scope="session")
def mmi_layout():
    return Layout.mmi()
