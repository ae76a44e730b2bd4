import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsbridge.bohm import bohm_amplitude_fd, bohm_gaussian, bohm_generic_fd, internal_energy, score_gaussian
from qsbridge.bridge import Gaussian
from qsbridge.spd import random_spd


def std_normal(n):
    return Gaussian(np.zeros(n), np.eye(n))


def test_score_examples(rng):
    g = Gaussian(rng.normal(size=3), random_spd(3, rng))
    np.testing.assert_allclose(score_gaussian(g, g.mean), 0, atol=1e-15)
    assert score_gaussian(std_normal(1), np.array([2.0]))[0] == pytest.approx(-2.0)
    x, h = rng.normal(size=3), 1e-6
    fd = [(g.logpdf(x + h * e) - g.logpdf(x - h * e)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(score_gaussian(g, x), fd, atol=1e-6)


def test_bohm_gaussian_examples():
    assert bohm_gaussian(std_normal(2), 1.0, np.zeros(2)) == pytest.approx(2.0)
    assert bohm_gaussian(std_normal(2), 0.0, np.array([3.0, 1.0])) == 0.0
    x = np.array([1.0, 0.0])
    fd = bohm_generic_fd(std_normal(2).logpdf, 1.0, x)
    assert bohm_gaussian(std_normal(2), 1.0, x) == pytest.approx(fd, abs=1e-5)


def test_bohm_gaussian_maximum_at_mean(rng):
    g = Gaussian(rng.normal(size=2), random_spd(2, rng))
    top = bohm_gaussian(g, 0.7, g.mean)
    assert top == pytest.approx(0.49 * np.trace(g.precision))
    X = g.mean + rng.normal(size=(100, 2))
    assert np.all(bohm_gaussian(g, 0.7, X) <= top)


def test_generic_fd_matches_closed_form(rng):
    for n in (1, 2, 4):
        g = Gaussian(rng.normal(size=n), random_spd(n, rng))
        for _ in range(5):
            x = g.mean + rng.normal(size=n)
            assert bohm_generic_fd(g.logpdf, 0.5, x) == pytest.approx(bohm_gaussian(g, 0.5, x), abs=1e-5)


def test_generic_fd_second_order_in_h(rng):
    g = Gaussian(np.zeros(2), random_spd(2, rng))
    x = np.array([0.8, -0.4])
    exact = bohm_gaussian(g, 1.0, x)
    # a non-polynomial log-density: perturb with a sine so FD truncation error is visible
    logp = lambda p: g.logpdf(p) + 0.1 * np.sin(3 * p[0])  # noqa: E731
    e1 = abs(bohm_generic_fd(logp, 1.0, x, h=1e-2) - bohm_generic_fd(logp, 1.0, x, h=1e-4))
    e2 = abs(bohm_generic_fd(logp, 1.0, x, h=5e-3) - bohm_generic_fd(logp, 1.0, x, h=1e-4))
    assert 3.0 < e1 / e2 < 5.0
    assert np.isfinite(exact)


def test_generic_fd_flat_and_nonfinite():
    assert bohm_generic_fd(lambda p: 3.0, 1.0, np.zeros(2)) == 0.0
    with pytest.raises(ValueError, match="stencil point"):
        bohm_generic_fd(lambda p: np.log(p[0]) if p[0] > 0 else -np.inf, 1.0, np.array([0.0]))


def test_internal_energy_examples():
    assert internal_energy(std_normal(2), 1.0) == pytest.approx(1.0)
    assert internal_energy(std_normal(3), 0.0) == 0.0
    assert internal_energy(Gaussian(np.zeros(2), np.diag([1.0, 4.0])), 0.5) == pytest.approx(0.15625)


def test_internal_energy_is_expected_potential():
    g = Gaussian(np.array([1.0, -2.0]), np.diag([1.0, 4.0]))
    X = np.random.default_rng(5).multivariate_normal(g.mean, g.cov, size=1_000_000)
    mc = bohm_gaussian(g, 0.5, X).mean()
    assert mc == pytest.approx(internal_energy(g, 0.5), rel=5e-3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-50, 50), c=st.floats(0.1, 10))
def test_translation_invariance_and_beta_scaling(seed, shift, c):
    rng = np.random.default_rng(seed)
    g = Gaussian(rng.normal(size=2), random_spd(2, rng))
    x = rng.normal(size=2)
    moved = Gaussian(g.mean + shift, g.cov)
    q = bohm_gaussian(g, 0.3, x)
    assert bohm_gaussian(moved, 0.3, x + shift) == pytest.approx(q, rel=1e-9, abs=1e-12)
    assert bohm_gaussian(g, 0.3 * c, x) == pytest.approx(c**2 * q, rel=1e-12, abs=1e-15)


def test_amplitude_form_matches_log_form(rng):
    g = Gaussian(rng.normal(size=2), random_spd(2, rng))
    for _ in range(5):
        x = g.mean + 0.7 * rng.normal(size=2)
        a = bohm_amplitude_fd(g.pdf, 0.4, x)
        b = bohm_generic_fd(g.logpdf, 0.4, x)
        assert a == pytest.approx(b, abs=1e-5)
