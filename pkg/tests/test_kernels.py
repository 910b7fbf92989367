"""Acceleration-path selection and numba/numpy kernel equivalence."""

import os
import subprocess
import sys

import numpy as np

from ndopspin import _accel, _kernels


def _flag_probe(value):
    env = dict(os.environ, NDOPSPIN_NUMBA=value)
    out = subprocess.run(
        [sys.executable, "-c",
         "from ndopspin import _accel; print(_accel.USE_NUMBA)"],
        env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_flag_disables_numba():
    assert _flag_probe("0") == "False"


def test_env_flag_default_enables_when_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        expected = "False"
    else:
        expected = "True"
    assert _flag_probe("1") == expected


def test_dispatch_names_bound():
    assert callable(_kernels.po4dop_terms)
    assert callable(_kernels.orbit_theta_steps)
    if _accel.USE_NUMBA:
        assert _kernels.po4dop_terms is not _kernels.po4dop_terms_numpy


def test_orbit_stepper_paths_agree():
    rng = np.random.default_rng(5)
    n_steps = 200
    dt = 1e5
    lmat = np.array([[-1e-9, 1e-9, 2e-8, 0.0],
                     [3e-10, -3e-10, 0.0, 2e-8],
                     [0.0, 0.0, -1e-9 - 2e-8, 1e-9],
                     [0.0, 0.0, 3e-10, -3e-10 - 2e-8]])
    eye = np.eye(4)
    for theta in (1.0, 0.5):
        m_inv = np.linalg.inv(eye - theta * dt * lmat)
        m_expl = eye + (1.0 - theta) * dt * lmat
        gvec = np.array([-1.0, 0.11, 0.67, 0.0])
        light = rng.uniform(0.0, 150.0, n_steps + 1)
        y_a = np.array([1.3, 0.9, 0.05, 0.01])
        y_b = y_a.copy()
        _kernels.orbit_theta_steps(y_a, n_steps, theta, dt, m_inv, m_expl, gvec,
                                   light, 2e-8, 0.5, 30.0, 1e-14)
        _kernels.orbit_theta_steps_python(y_b, n_steps, theta, dt, m_inv, m_expl,
                                          gvec, light, 2e-8, 0.5, 30.0, 1e-14)
        assert np.allclose(y_a, y_b, rtol=1e-13, atol=0)
