import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsasymp.errors import DomainError, ResolutionError, UnsupportedOrderError
from nsasymp.kernels import (KernelSpec, hermite, hermite_gauss_derivative, kernel_field,
                             kernel_symbol, scalar_time_weight)
from nsasymp.metrics import NormSpec, weighted_norm
from nsasymp.spectral import Grid

GRID = Grid(2, 256, 64.0)


def multi_indices(top):
    return [(a, d - a) for d in range(top + 1) for a in range(d + 1)]


def oracle(alpha, t, grid=GRID):
    return hermite_gauss_derivative(alpha, t, grid.x)


class TestHermite:
    def test_recurrence_low_orders(self):
        z = np.linspace(-2, 2, 7)
        assert np.allclose(hermite(2, z), 4 * z**2 - 2)
        assert np.allclose(hermite(3, z), 8 * z**3 - 12 * z)
        assert np.allclose(hermite(4, z), 16 * z**4 - 48 * z**2 + 12)

    def test_heat_kernel_at_origin(self):
        assert hermite_gauss_derivative((0, 0), 1.0, (0.0, 0.0)) == pytest.approx(1 / (4 * math.pi))

    def test_odd_derivative_vanishes_at_origin(self):
        assert hermite_gauss_derivative((1, 0), 1.0, (0.0, 0.0)) == 0.0

    def test_order_cap(self):
        with pytest.raises(UnsupportedOrderError):
            hermite_gauss_derivative((7, 6), 1.0, (0.0, 0.0))

    def test_time_must_be_positive(self):
        with pytest.raises(ValueError):
            hermite_gauss_derivative((0, 0), 0.0, (0.0, 0.0))


class TestKernelField:
    def test_value_at_origin(self):
        f = kernel_field(KernelSpec(t=1.0), GRID)
        assert f.data[128, 128] == pytest.approx(1 / (4 * math.pi), rel=1e-12)

    @pytest.mark.parametrize("t", [0.5, 1.0, 4.0])
    def test_matches_closed_form(self, t):
        worst = 0.0
        for alpha in multi_indices(4):
            want = oracle(alpha, t)
            got = kernel_field(KernelSpec(0, alpha, t=t), GRID).data
            worst = max(worst, np.max(np.abs(got - want)) / np.max(np.abs(want)))
        assert worst < 1e-10

    def test_time_derivative_is_laplacian(self):
        dt = kernel_field(KernelSpec(1, (0, 0)), GRID).data
        lap = sum(kernel_field(KernelSpec(0, b), GRID).data for b in ((2, 0), (0, 2)))
        assert np.max(np.abs(dt - lap)) < 1e-12

    def test_riesz_square_sum_is_minus_identity(self):
        plain = kernel_field(KernelSpec(0, (1, 0)), GRID).data
        both = sum(kernel_field(KernelSpec(0, (1, 0), (k, k)), GRID).data for k in (1, 2))
        assert np.max(np.abs(both + plain)) < 1e-12

    def test_symbol_is_read_only_and_cached(self):
        a = kernel_symbol(KernelSpec(0, (1, 1)), GRID)
        assert a is kernel_symbol(KernelSpec(0, (1, 1)), GRID)
        assert not a.flags.writeable

    def test_too_small_time_for_grid(self):
        with pytest.raises(ResolutionError):
            kernel_field(KernelSpec(t=0.01), GRID)

    def test_too_large_time_for_box(self):
        with pytest.raises(ResolutionError, match="boundary"):
            kernel_field(KernelSpec(t=40.0), Grid(2, 64, 16.0))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(0, (0, 0), (3,))
        with pytest.raises(UnsupportedOrderError):
            KernelSpec(4, (3, 2))


@pytest.mark.parametrize("l,beta,q", [(0, (0, 0), 1.0), (0, (1, 0), math.inf), (1, (0, 1), 1.0),
                                      (0, (2, 1), 2.0)])
def test_self_similarity(l, beta, q):
    # co-scaled boxes keep the periodized kernel an exact rescaling
    e = (1 - 1 / q) + l + sum(beta) / 2
    base = weighted_norm(kernel_field(KernelSpec(l, beta, t=1.0), Grid(2, 128, 32.0)), NormSpec(q))
    for t in (4.0, 16.0):
        g = Grid(2, 128, 32.0 * math.sqrt(t))
        val = weighted_norm(kernel_field(KernelSpec(l, beta, t=t), g), NormSpec(q))
        assert val * t**e == pytest.approx(base, rel=1e-6)


class TestScalarTimeWeight:
    def test_unit_integrand(self):
        assert scalar_time_weight(0, 0.0, 2.0) == pytest.approx(2.0, rel=1e-12)

    def test_infinite_horizon(self):
        assert scalar_time_weight(1, -3.0, math.inf) == pytest.approx(0.5, rel=1e-10)

    def test_tail_mode(self):
        # antiderivative s^-1 - (1+s)^-1
        assert scalar_time_weight(0, -2.0, 1.0, "tail_t_to_inf") == pytest.approx(-0.5, rel=1e-10)

    def test_divergent_tail(self):
        with pytest.raises(DomainError):
            scalar_time_weight(1, -1.0, 1.0, "tail_t_to_inf")

    def test_divergent_infinite_horizon(self):
        with pytest.raises(DomainError):
            scalar_time_weight(1, -2.0, math.inf)

    def test_zero_horizon(self):
        assert scalar_time_weight(2, -1.5, 0.0) == 0.0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            scalar_time_weight(0, 0.0, 1.0, "midpoint")

    @settings(max_examples=30, deadline=None)
    @given(l=st.integers(0, 3), a=st.floats(-6.0, 2.0), t=st.floats(0.1, 50.0))
    def test_finite_mode_matches_closed_form_for_integer_shift(self, l, a, t):
        # s^l (1+s)^a with s = (1+s) - 1 expands into powers of (1+s)
        total = 0.0
        for j in range(l + 1):
            p = a + j
            c = math.comb(l, j) * (-1) ** (l - j)
            total += c * (math.log1p(t) if abs(p + 1) < 1e-12 else ((1 + t) ** (p + 1) - 1) / (p + 1))
        got = scalar_time_weight(l, a, t)
        assert got == pytest.approx(total, rel=1e-8, abs=1e-9 * (1 + t) ** max(l + a + 1, 0))


@settings(max_examples=20, deadline=None)
@given(a=st.integers(0, 4), b=st.integers(0, 4), t=st.sampled_from([0.5, 1.0, 2.0, 4.0]))
def test_hermite_oracle_property(a, b, t):
    want = oracle((a, b), t)
    got = kernel_field(KernelSpec(0, (a, b), t=t), GRID).data
    assert np.max(np.abs(got - want)) <= 1e-10 * np.max(np.abs(want))
