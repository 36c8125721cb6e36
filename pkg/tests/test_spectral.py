import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsasymp.errors import (ConfigurationError, DataError, EvaluationError,
                            PreconditionError)
from nsasymp.spectral import (Grid, PhysicalField, SpectralField, apply_multiplier,
                              biot_savart, compose, curl, derivative_symbol, read_nsaf,
                              riesz_symbol, spectral_divergence_defect, transform,
                              write_nsaf)

GRID = Grid(2, 64, 20.0)


def random_zero_mean(grid, seed, smooth=1.0):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=grid.shape)
    c = np.fft.fftn(f) * np.exp(-smooth * grid.xi2)
    c[0, 0] = 0.0
    return np.fft.ifftn(c).real


class TestGrid:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ConfigurationError):
            Grid(2, 48, 10.0)

    def test_rejects_bad_length(self):
        with pytest.raises(ConfigurationError):
            Grid(2, 64, 0.0)

    def test_coordinates_are_centered(self):
        assert GRID.x1d[GRID.N // 2] == 0.0
        assert GRID.x1d[0] == -GRID.L / 2


class TestTransform:
    def test_constant_field_has_only_dc(self):
        c = transform(PhysicalField(GRID, np.full(GRID.shape, 3.0))).coeffs
        assert abs(c[0, 0]) > 0
        c[0, 0] = 0
        assert np.max(np.abs(c)) < 1e-12

    def test_cosine_is_two_modes(self):
        x1 = GRID.x[0]
        f = np.broadcast_to(np.cos(2 * np.pi * x1 / GRID.L), GRID.shape)
        c = np.abs(transform(PhysicalField(GRID, f)).coeffs)
        hot = np.argwhere(c > 1e-9 * c.max())
        assert sorted(map(tuple, hot)) == [(1, 0), (GRID.N - 1, 0)]
        assert c[1, 0] == pytest.approx(c[-1, 0], rel=1e-14)

    def test_round_trip(self):
        f = np.random.default_rng(3).normal(size=GRID.shape)
        back = transform(transform(PhysicalField(GRID, f))).data
        assert np.max(np.abs(back - f)) < 1e-12

    def test_non_finite_data_rejected(self):
        f = np.zeros(GRID.shape)
        f[0, 0] = np.nan
        with pytest.raises(DataError):
            PhysicalField(GRID, f)

    def test_wrong_direction(self):
        with pytest.raises(DataError):
            transform(PhysicalField(GRID, np.zeros(GRID.shape)), "inverse")


class TestMultiplier:
    def test_identity_multiplier(self):
        f = transform(PhysicalField(GRID, np.random.default_rng(0).normal(size=GRID.shape)))
        g = apply_multiplier(f, lambda xi: np.ones_like(xi[0] * xi[1]))
        assert np.max(np.abs(g.coeffs - f.coeffs)) < 1e-14

    def test_derivative_of_cosine(self):
        k = 2 * np.pi / GRID.L
        x1 = GRID.x[0]
        f = np.broadcast_to(np.cos(k * x1), GRID.shape)
        d = transform(apply_multiplier(transform(PhysicalField(GRID, f)), derivative_symbol((1, 0)))).data
        assert np.max(np.abs(d + k * np.sin(k * x1))) < 1e-12

    def test_riesz_pair_cancels_derivative(self):
        phi = transform(PhysicalField(GRID, random_zero_mean(GRID, 1)))
        for j in (1, 2):
            beta = (1, 0), (0, 1)
            total = sum(apply_multiplier(phi, compose(riesz_symbol(k), riesz_symbol(j),
                                                      derivative_symbol(beta[k - 1])),
                                         zero_mean=True).coeffs for k in (1, 2))
            want = -apply_multiplier(phi, derivative_symbol(beta[j - 1])).coeffs
            lhs = transform(SpectralField(GRID, total)).data
            rhs = transform(SpectralField(GRID, want)).data
            assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_nan_away_from_origin_is_an_error(self):
        f = transform(PhysicalField(GRID, np.zeros(GRID.shape)))
        with pytest.raises(EvaluationError):
            apply_multiplier(f, lambda xi: np.where(xi[0] > 1, np.nan, 1.0) + 0 * xi[1])

    def test_singular_origin_needs_zero_mean(self):
        f = transform(PhysicalField(GRID, np.zeros(GRID.shape)))
        inverse_laplacian = lambda xi: 1.0 / (xi[0] ** 2 + xi[1] ** 2)
        with pytest.raises(EvaluationError):
            apply_multiplier(f, inverse_laplacian)
        apply_multiplier(f, inverse_laplacian, zero_mean=True)

    def test_library_riesz_symbol_vanishes_at_origin(self):
        assert riesz_symbol(1)(GRID.xi)[0, 0] == 0

    def test_composition_matches_product(self):
        f = transform(PhysicalField(GRID, random_zero_mean(GRID, 2)))
        m1, m2 = derivative_symbol((1, 1)), riesz_symbol(2)
        two = apply_multiplier(apply_multiplier(f, m1), m2, zero_mean=True)
        one = apply_multiplier(f, compose(m1, m2), zero_mean=True)
        assert np.max(np.abs(two.coeffs - one.coeffs)) < 1e-13 * np.max(np.abs(one.coeffs))


class TestBiotSavart:
    def test_zero_vorticity(self):
        u1, u2 = biot_savart(PhysicalField(GRID, np.zeros(GRID.shape)))
        assert not u1.data.any() and not u2.data.any()

    def test_stream_function_oracle(self):
        grid = Grid(2, 256, 40.0)
        x1, x2 = grid.x
        psi = np.exp(-(x1**2 + x2**2))
        w = (4 - 4 * (x1**2 + x2**2)) * psi
        u1, u2 = biot_savart(PhysicalField(grid, w))
        # u = (d2 psi, -d1 psi)
        assert np.max(np.abs(u1.data + 2 * x2 * psi)) < 1e-8
        assert np.max(np.abs(u2.data - 2 * x1 * psi)) < 1e-8

    def test_curl_round_trip(self):
        w = random_zero_mean(GRID, 4)
        u1, u2 = biot_savart(PhysicalField(GRID, w))
        back = curl(u1, u2).data
        assert np.max(np.abs(back - w)) < 1e-12 * np.max(np.abs(w))

    def test_divergence_free(self):
        u1, u2 = biot_savart(PhysicalField(GRID, random_zero_mean(GRID, 5)))
        assert spectral_divergence_defect(u1.data, u2.data, GRID) < 1e-12

    def test_nonzero_mean_rejected(self):
        with pytest.raises(PreconditionError, match="zero mean"):
            biot_savart(PhysicalField(GRID, np.ones(GRID.shape)))


def test_nsaf_round_trip(tmp_path):
    f = PhysicalField(GRID, np.random.default_rng(9).normal(size=GRID.shape), 2.5)
    write_nsaf(tmp_path / "a.nsaf", f)
    g = read_nsaf(tmp_path / "a.nsaf")
    assert g.grid == GRID and g.time_tag == 2.5
    assert np.array_equal(g.data, f.data)


def test_nsaf_truncated(tmp_path):
    (tmp_path / "b.nsaf").write_bytes(b"NSAF")
    with pytest.raises(DataError):
        read_nsaf(tmp_path / "b.nsaf")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
def test_parseval(seed, scale):
    f = scale * np.random.default_rng(seed).normal(size=GRID.shape)
    c = transform(PhysicalField(GRID, f)).coeffs
    assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(f), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_velocity_always_divergence_free(seed):
    u1, u2 = biot_savart(PhysicalField(GRID, random_zero_mean(GRID, seed, 0.3)))
    assert spectral_divergence_defect(u1.data, u2.data, GRID) < 1e-12
