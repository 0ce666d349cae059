import numpy as np
import pytest

import betasplit as bs


@pytest.fixture(scope="session")
def tab():
    """Harmonic table large enough for every unit test's exact range."""
    return bs.HarmonicTable(10**5)


@pytest.fixture(scope="session")
def constants():
    return bs.compute_constants(10**7)


@pytest.fixture(scope="session")
def tables_2000(tab):
    mu, s2 = bs.moment_tables(2000, "discrete", table=tab)
    return mu, s2


@pytest.fixture(scope="session")
def cont_tables_2000(tab):
    mu, s2 = bs.moment_tables(2000, "continuous", table=tab)
    return mu, s2


@pytest.fixture(scope="session")
def pmfs_2000(tab):
    return bs.height_pmf_table(2000, table=tab)


def rng(seed=0):
    return np.random.default_rng(seed)
