import math

import numpy as np
import pytest

from chemolab.errors import NumericError, StiffnessError
from chemolab.integrators import dormand_prince, dormand_prince_fixed


def decay(t, y):
    return -y


def test_exponential_within_tolerance():
    times, ys, stats = dormand_prince(decay, 0.0, [1.0], 1.0, rtol=1e-9, atol=1e-12)
    assert times[-1] == 1.0
    assert abs(ys[-1, 0] - math.exp(-1.0)) <= 1e-9 * math.exp(-1.0)
    assert stats.steps > 0


def test_output_times_hit_exactly():
    req = [0.1, 0.25, 0.5, 0.9]
    times, ys, _ = dormand_prince(decay, 0.0, [2.0], 1.0, output_times=req)
    np.testing.assert_array_equal(times, [0.0] + req + [1.0])
    np.testing.assert_allclose(ys[:, 0], 2 * np.exp(-times), rtol=1e-9)


def test_step_halving_is_at_least_fourth_order():
    exact = math.exp(-1.0)
    errs = [abs(dormand_prince_fixed(decay, 0.0, [1.0], 1.0, n)[0] - exact) for n in (10, 20, 40)]
    assert errs[0] / errs[1] >= 2 ** 4 * 0.8
    assert errs[1] / errs[2] >= 2 ** 4 * 0.8


def test_harmonic_oscillator_energy():
    def osc(t, y):
        return np.array([y[1], -y[0]])

    _, ys, _ = dormand_prince(osc, 0.0, [1.0, 0.0], 20 * math.pi, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(ys[-1], [1.0, 0.0], atol=1e-7)


def test_check_callback_can_abort():
    def check(t, y):
        if t > 0.5:
            raise NumericError("stop")

    with pytest.raises(NumericError, match="stop"):
        dormand_prince(decay, 0.0, [1.0], 1.0, check=check)


def test_blow_up_is_reported():
    # y' = y^2 from y(0)=1 blows up at t=1
    with pytest.raises((StiffnessError, NumericError)):
        dormand_prince(lambda t, y: y * y, 0.0, [1.0], 2.0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        dormand_prince(decay, 1.0, [1.0], 1.0)
    with pytest.raises(ValueError):
        dormand_prince(decay, 0.0, [1.0], 1.0, output_times=[2.0])
    with pytest.raises(NumericError):
        dormand_prince(decay, 0.0, [math.inf], 1.0)
