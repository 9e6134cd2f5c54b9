"""Shared fixtures: deterministic synthetic walks reused across the suite."""

import numpy as np
import pytest

from gaitfusion.features import analyze_trial
from gaitfusion.synth import GaitProfile, generate_trial


@pytest.fixture(scope="session")
def quiet_walk():
    """Noise-free, perfectly regular 12 s walk with ground truth."""
    profile = GaitProfile(gyro_noise_sd=0.0, acc_noise_sd=0.0,
                          stride_time_cv=0.0, stride_length_cv=0.0)
    return generate_trial(profile, 12.0, np.random.default_rng(0))


@pytest.fixture(scope="session")
def noisy_walk():
    """Default-noise 20 s walk with ground truth."""
    return generate_trial(GaitProfile(), 20.0, np.random.default_rng(1))


@pytest.fixture(scope="session")
def analyzed_walk(noisy_walk):
    """(series, cycles, features) for the default walk, computed once."""
    trial, _ = noisy_walk
    return analyze_trial(trial)
