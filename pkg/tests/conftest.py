import math

import numpy as np
import pytest

from oam_bench.models.mode_space import ModeSpace
from oam_bench.schemas.imperfections import reference_imperfections
from oam_bench.services.elements import default_space


def leak_terms(extinction_db: float):
    """(kappa, mu) of a TBS built from two PBSs with the given extinction.

    kappa = (1 - e)/(1 + e), mu = 2 sqrt(e)/(1 + e), e = 10^(-dB/10); kappa^2 + mu^2 = 1.
    """
    e = 10 ** (-extinction_db / 10)
    return (1 - e) / (1 + e), 2 * math.sqrt(e) / (1 + e)


@pytest.fixture
def space() -> ModeSpace:
    return default_space(4)


@pytest.fixture
def small_space() -> ModeSpace:
    return ModeSpace(ports=(1, 2), oam_range=1)


@pytest.fixture
def reference_imp():
    return reference_imperfections()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
