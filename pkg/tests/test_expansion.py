import math

import numpy as np
import pytest

from nsasymp.errors import UnsupportedOrderError
from nsasymp.expansion import CORRECTION_KINDS, Expansion, TermKind, graded
from nsasymp.identities import profile_scaling
from nsasymp.metrics import NormSpec, weighted_norm
from nsasymp.moments import MomentSeries
from nsasymp.solver import make_initial_data
from nsasymp.spectral import Grid, PhysicalField

BASE = Grid(2, 256, 48.0)


def coscaled(t, base=BASE, t0=1.0):
    return Grid(2, base.N, base.L * math.sqrt(t / t0))


@pytest.fixture(scope="module")
def off_center():
    w0, _ = make_initial_data("gaussian_curl", 1.0, BASE, center=(1.0, 0.5))
    return Expansion(w0)


@pytest.fixture(scope="module")
def radial():
    w0, _ = make_initial_data("gaussian_curl", 1.0, BASE)
    return Expansion(w0)


def test_graded_indices():
    assert graded(2) == [(0, (2, 0)), (0, (1, 1)), (0, (0, 2)), (1, (0, 0))]


class TestLinearProfiles:
    @pytest.mark.parametrize("m", [2, 3])
    def test_omega_l1_scaling(self, off_center, m):
        a = weighted_norm(off_center.profile("Omega", m, (1, 2), 1.0, BASE).field, NormSpec(1.0))
        b = weighted_norm(off_center.profile("Omega", m, (1, 2), 4.0, coscaled(4.0)).field, NormSpec(1.0))
        assert a > 0
        assert b == pytest.approx(4.0 ** (-m / 2) * a, rel=1e-6)

    @pytest.mark.parametrize("m", [2, 3])
    def test_omega_l2_scaling_on_a_fixed_box(self, off_center, m):
        # independent of the co-scaled construction: one box for every t
        g = Grid(2, 512, 128.0)
        vals = [weighted_norm(off_center.profile("Omega", m, (1, 2), t, g).field, NormSpec(2.0)) * t ** (0.5 + m / 2)
                for t in (1.0, 4.0, 16.0)]
        assert vals[1] == pytest.approx(vals[0], rel=1e-12) and vals[2] == pytest.approx(vals[0], rel=1e-12)

    def test_omega_components_are_antisymmetric(self, off_center):
        a = off_center.omega_field(2, (1, 2), 1.0, BASE)
        b = off_center.omega_field(2, (2, 1), 1.0, BASE)
        assert np.array_equal(a, -b)

    def test_radial_mixed_moment_vanishes(self, radial):
        assert abs(radial.omega0_moment((1, 1), 1, 2)) < 1e-10

    def test_radial_even_velocity_orders_vanish(self, radial):
        for order in (2, 4):
            u = radial.velocity_field("U", order, 1, 1.0, BASE)
            assert np.max(np.abs(u)) < 1e-12

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_velocity_scaling(self, off_center, order):
        res = profile_scaling(off_center, BASE, terms=(("U", order),))
        assert res[f"U{order}"]["deviation"] < 1e-6

    def test_linear_run_has_no_nonlinear_terms(self, off_center):
        for kind in ("UT", "US"):
            assert not np.any(off_center.velocity_field(kind, 3, 1, 1.0, BASE))
        for kind in [k.value for k in CORRECTION_KINDS] + ["J"]:
            p = off_center.profile(kind, 3, (1,), 1.0, BASE)
            assert not np.any(p.field.data)

    def test_zero_data_gives_zero_profiles(self):
        ex = Expansion(PhysicalField(BASE, np.zeros(BASE.shape)), MomentSeries.zeros(np.linspace(0, 10, 50)))
        for kind, order, comp in (("Omega", 2, (1, 2)), ("U", 1, (1,)), ("U", 4, (2,)), ("UT", 3, (1,)),
                                  ("US", 2, (2,)), ("K", 3, (1,)), ("V", 4, (2,)), ("J", 3, (1,))):
            assert not np.any(ex.profile(kind, order, comp, 1.0, BASE).field.data)

    def test_order_ranges(self, off_center):
        with pytest.raises(UnsupportedOrderError):
            off_center.velocity_field("U", 5, 1, 1.0, BASE)
        with pytest.raises(UnsupportedOrderError):
            off_center.omega_field(1, (1, 2), 1.0, BASE)
        with pytest.raises(UnsupportedOrderError):
            off_center.correction_symbol("K", 3, 1, 1.0, BASE)

    def test_provenance_is_recorded(self, off_center):
        p = off_center.profile("U", 2, (1,), 1.0, BASE)
        assert any(row["integrand"] == "omega0" for row in p.provenance)
        assert "U_2_1" in off_center.provenance

    def test_wrong_kind(self, off_center):
        with pytest.raises(ValueError):
            off_center.velocity_symbol("K", 1, 1, 1.0, BASE)


@pytest.mark.slow
class TestNonlinearProfiles:
    """Profiles built from the session dipole run, where the nonlinear terms are live."""

    def test_tilde_kinds_vanish(self, dipole_expansion):
        for kind in ("Vtilde", "VtildeT"):
            for m in (1, 2):
                assert not np.any(dipole_expansion.correction_symbol(kind, m, 1, 1.0, BASE))

    def test_terms_are_live(self, dipole_expansion):
        # the pair's symmetry cancels the low I moments behind V_3, so check order 4
        for kind in ("UT", "K", "V", "VT", "J"):
            data = dipole_expansion.profile(kind, 4, (2,), 1.0, BASE).field.data
            assert np.max(np.abs(data)) > 1e-3

    def test_corrections_scale(self, dipole_expansion):
        res = profile_scaling(dipole_expansion, BASE, terms=(("V", 3), ("V", 4), ("VT", 3), ("VT", 4)))
        assert max(r["deviation"] for r in res.values()) < 1e-6

    def test_J_scaling_ratio(self, dipole_expansion):
        a = np.max(np.abs(dipole_expansion.profile("J", 3, (1,), 1.0, BASE).field.data))
        b = np.max(np.abs(dipole_expansion.profile("J", 3, (1,), 4.0, coscaled(4.0)).field.data))
        assert b / a == pytest.approx(1 / 32, rel=1e-3)

    def test_J_panel_doubling_converged(self, dipole_expansion):
        dipole_expansion.profile("J", 4, (2,), 1.0, BASE)
        assert dipole_expansion.j_convergence[(2, 1.0)] < 1e-4
        sym = dipole_expansion.J_symbols(2, 1.0, BASE)
        assert all(np.all(np.isfinite(s)) for s in sym.values())

    def test_K_within_log_envelope(self, dipole_expansion):
        # ||K_{n+m}(t)||_inf = O(t^(-n/2 - n/2 - m/2) log(2+t)) for m = 1
        ratios = []
        for t in (1.0, 4.0, 16.0, 64.0):
            k = dipole_expansion.profile("K", 3, (1,), t, coscaled(t)).field.data
            ratios.append(np.max(np.abs(k)) * t**2.5 / math.log(2 + t))
        assert max(ratios) / min(ratios) < 3.0

    def test_I_tensors_have_zero_mean(self, dipole_expansion):
        for p in (3, 4):
            T = dipole_expansion.tensor(p)
            assert not T.is_zero
            assert T.zero_mean_defect() < 1e-8

    def test_finite_horizon_flux_tends_to_infinite_one(self, dipole_expansion):
        full = dipole_expansion.flux(0, (1, 0), 2)
        part = dipole_expansion.flux(0, (1, 0), 2, horizon=64.0)
        assert full != 0
        assert abs(part - full) <= 0.3 * abs(full)

    def test_kinds_are_enumerated(self):
        assert {k.value for k in TermKind} >= {"Omega", "U", "UT", "US", "K", "V", "VT", "J"}
