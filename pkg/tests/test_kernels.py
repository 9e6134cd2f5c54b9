"""Compiled backend selection and equivalence with the numpy fall-back."""

import numpy as np
import pytest

from gaitfusion import kernels
from gaitfusion.attitude import estimate_attitude
from gaitfusion.features import (EmbeddingConfig, _divergence_curve_numpy,
                                 _embed, lyapunov_max)

needs_native = pytest.mark.skipif(kernels.NATIVE is None,
                                  reason="compiled extension not built")


def test_backend_name_matches_import():
    assert kernels.BACKEND in ("native", "python")
    assert (kernels.BACKEND == "native") == (kernels.NATIVE is not None)


@needs_native
def test_filter_bank_backends_agree(noisy_walk):
    trial, _ = noisy_walk
    nat = estimate_attitude(trial, backend="native")
    py = estimate_attitude(trial, backend="python")
    assert nat.backend == "native" and py.backend == "python"
    np.testing.assert_allclose(nat.angles, py.angles, atol=1e-9)
    np.testing.assert_allclose(nat.weights, py.weights, atol=1e-9)
    assert np.array_equal(np.isnan(nat.innovation_norm),
                          np.isnan(py.innovation_norm))
    ok = ~np.isnan(nat.innovation_norm)
    np.testing.assert_allclose(nat.innovation_norm[ok],
                               py.innovation_norm[ok], atol=1e-9)
    assert nat.gated_steps == py.gated_steps


@needs_native
def test_divergence_curve_backends_agree():
    rng = np.random.default_rng(3)
    x = np.sin(2 * np.pi * np.sqrt(2.0) * np.arange(1500) / 100.0)
    x = x + 0.05 * rng.standard_normal(1500)
    Y = _embed(x, 5, 17)
    nat = kernels.NATIVE.divergence_curve(
        np.ascontiguousarray(Y), 75, 50)
    ref = _divergence_curve_numpy(Y, 75, 50)
    np.testing.assert_allclose(nat, ref, atol=1e-9)


@needs_native
def test_lyapunov_backends_agree():
    x = np.sin(2 * np.pi * np.sqrt(2.0) * np.arange(2000) / 100.0)
    cfg = EmbeddingConfig(dim=5, delay=17, evolve_steps=50, min_separation=75)
    a = lyapunov_max(x, 100.0, cfg, backend="native")
    b = lyapunov_max(x, 100.0, cfg, backend="python")
    assert a == pytest.approx(b, abs=1e-9)
