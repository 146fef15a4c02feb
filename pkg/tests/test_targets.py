import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from amcmc_diffusion.targets import DensityError, TargetDensity, acceptance_probability

reals = st.floats(-30, 30, allow_nan=False)


def test_normal_score_and_density(normal):
    assert normal.score(0.0) == 0.0
    assert normal.score(1.0) == -1.0
    assert normal.log_density(2.0) - normal.log_density(0.0) == -2.0


def test_acceptance_examples(normal):
    assert acceptance_probability(normal, 1.3, 1.3) == 1.0
    assert acceptance_probability(normal, 1.0, 0.0) == 1.0
    assert acceptance_probability(normal, 0.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert round(acceptance_probability(normal, 0.0, 1.0), 6) == 0.606531


@given(reals, reals)
def test_acceptance_in_unit_interval_and_symmetric(x, y):
    from amcmc_diffusion.targets import standard_normal
    t = standard_normal()
    a = acceptance_probability(t, x, y)
    assert 0.0 <= a <= 1.0
    assert a == acceptance_probability(t, -x, -y)


def test_vectorised(normal):
    a = acceptance_probability(normal, np.zeros(3), np.array([0.0, 1.0, -1.0]))
    assert a.shape == (3,)
    assert a[1] == a[2]


def test_bad_density_raises():
    bad = TargetDensity(lambda x: math.log(x) if x > 0 else math.nan, lambda x: 1 / x, "log")
    with pytest.raises(DensityError, match="density evaluation failed"):
        acceptance_probability(bad, 1.0, -1.0)
