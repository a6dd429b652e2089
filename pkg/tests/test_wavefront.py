import numpy as np
import pytest

from egmrank.svdcore import svd_profile
from egmrank.wavefront import (inverse_distance_kernel, line_matrix, plane_delays,
                               point_source_delays)

X = np.arange(0.0, 60.0, 0.1)
Y = np.arange(20.0, 40.1, 2.0)


def sigma2(tau, tmpl, gains=1.0, support=15.0):
    return svd_profile(line_matrix(X, Y, tau, tmpl, gains, support=support)).sigma2


def test_kernel_support():
    f = inverse_distance_kernel(np.array([0.0, 3.0, 20.0]), 1.0, support=10.0)
    np.testing.assert_allclose(f, [1.0, 1 / np.sqrt(10.0), 0.0])


def test_plane_wave_is_rank_one(ap_long):
    assert sigma2(plane_delays(X, 0.5), ap_long) < 1e-12


def test_exponential_gain_keeps_rank_one(ap_long):
    assert sigma2(plane_delays(X, 0.5), ap_long, np.exp(0.02 * X)) < 1e-12


def test_small_linear_gain_gradient_stays_near_rank_one(ap_long):
    assert sigma2(plane_delays(X, 0.5), ap_long, 1 + 0.005 * X) < 1e-3


def test_curvature_raises_sigma2(ap_long):
    flat = sigma2(plane_delays(X, 0.5), ap_long)
    gentle = sigma2(point_source_delays(X - 30, 0.5, 30.0), ap_long)
    sharp = sigma2(point_source_delays(X - 30, 0.5, 3.0), ap_long)
    assert flat < gentle < sharp


def test_truncated_line_breaks_exactness(ap_long):
    # without a compact kernel the line ends leak into every electrode
    assert sigma2(plane_delays(X, 0.5), ap_long, support=None) > 1e-6
