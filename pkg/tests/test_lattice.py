import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from oblique_switch import ValidationError
from oblique_switch.lattice import SDEParams, build_lattice
from oblique_switch.simulator import hash_uniforms


def test_gaussian_weights_symmetric():
    lat = build_lattice(SDEParams(), T=0.01, steps=1, mode="gaussian", spacing=0.02, half_width=40)
    w = lat.W[40]
    np.testing.assert_allclose(w[40 - 10:40], w[40 + 10:40:-1], atol=1e-15)
    np.testing.assert_allclose(lat.W.sum(axis=1), 1.0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(0.2, 2.0), st.integers(2, 40))
def test_trinomial_moments(b, sigma, steps):
    # default spacing needs |b| sqrt(dt) <= sigma / sqrt(3)
    assume(abs(b) * np.sqrt(1.0 / steps) <= sigma / np.sqrt(3.0))
    sde = SDEParams(b0=b, s0=sigma)
    lat = build_lattice(sde, 1.0, steps)
    dt = lat.dt
    inner = slice(1, lat.M - 1)
    dx = lat.x[None, :] - lat.x[:, None]
    mean = (lat.W * dx).sum(axis=1)[inner]
    var = (lat.W * dx ** 2).sum(axis=1)[inner] - mean ** 2
    np.testing.assert_allclose(mean, b * dt, atol=1e-13)
    np.testing.assert_allclose(var, sigma ** 2 * dt, rtol=1e-12)
    np.testing.assert_allclose(lat.W.sum(axis=1), 1.0, atol=1e-14)
    assert lat.x[lat.root] == 0.0


def test_gaussian_moments_close():
    lat = build_lattice(SDEParams(b0=0.3, s0=0.8), 1.0, 50, mode="gaussian")
    m = lat.root
    dx = lat.x - lat.x[m]
    assert (lat.W[m] * dx).sum() == pytest.approx(0.3 * lat.dt, abs=1e-10)
    # cell integration adds h^2/12 to the variance
    h = lat.x[1] - lat.x[0]
    assert (lat.W[m] * dx ** 2).sum() - (0.3 * lat.dt) ** 2 == pytest.approx(0.64 * lat.dt + h * h / 12, rel=1e-3)


def test_coarse_grid_refused():
    with pytest.raises(ValidationError, match="suggested spacing"):
        build_lattice(SDEParams(), 1.0, 100, mode="gaussian", spacing=0.5)


def test_trinomial_bad_spacing_refused():
    with pytest.raises(ValidationError, match="negative") as exc:
        build_lattice(SDEParams(b0=1.0, s0=0.25), 1.0, 2)
    suggested = float(str(exc.value).rsplit("try ", 1)[1].rstrip(")"))
    build_lattice(SDEParams(b0=1.0, s0=0.25), 1.0, 2, spacing=suggested)
    with pytest.raises(ValidationError, match="negative"):
        build_lattice(SDEParams(), 1.0, 100, spacing=0.05)


def test_standardised_increments():
    sde = SDEParams(b0=0.2, s0=0.5, s1=0.1, x0=1.0)
    lat = build_lattice(sde, 1.0, 10)
    expect = (lat.x[None, :] - lat.x[:, None] - sde.drift(lat.x)[:, None] * lat.dt) / sde.vol(lat.x)[:, None]
    np.testing.assert_allclose(lat.dW, expect)


def test_sample_paths_follow_weights():
    lat = build_lattice(SDEParams(), 1.0, 4)
    U = hash_uniforms(0, 99, np.arange(200_000)[:, None], np.arange(4)[None, :])
    paths = lat.sample_paths(U)
    assert np.all(paths[:, 0] == lat.root)
    freq = np.bincount(paths[:, 1], minlength=lat.M) / len(paths)
    np.testing.assert_allclose(freq, lat.W[lat.root], atol=4e-3)
    assert np.all(np.abs(np.diff(paths, axis=1)) <= 1)
