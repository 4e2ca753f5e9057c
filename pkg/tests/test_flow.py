import json

import numpy as np
import pytest

from hemicycle.charts import AFFINE
from hemicycle.flow import (
    DulacMaps,
    FlowError,
    MapSamples,
    MapValue,
    Propagator,
    count_zeros,
    dulac_difference,
    hunt_simultaneous,
    sample_map,
)
from hemicycle.quadratic import QuadParams, d0_closed, involution, phi_inverse, phi_params

from oracles import exact_dulac_plus

Z0 = QuadParams(-0.5, 0.5)


@pytest.fixture(scope="module")
def z0_maps():
    return DulacMaps(Z0, tol=1e-12)


def test_round_trip_returns_to_start(z0_maps):
    prop = z0_maps._fine
    hit = prop.run(AFFINE, (0.0, 2.0), 1.0, direction=-1.0, far=False)
    back = prop.run(AFFINE, hit.point, -1.0, direction=-1.0, far=True)
    assert back.point[1] == pytest.approx(2.0, abs=1e-8)


def test_reversible_system_half_maps_agree(z0_maps):
    for s in (0.5, 0.05, 0.002):
        assert z0_maps.half_map(s, sign=1.0).value == pytest.approx(z0_maps.half_map(s, sign=-1.0).value, rel=1e-9)


@pytest.mark.parametrize("a,b", [(-0.5, 0.5), (-1.5, 1.0), (-0.7, 1.2)])
@pytest.mark.parametrize("s", [0.5, 0.02, 0.002])
def test_half_map_matches_first_integral(a, b, s):
    got = DulacMaps(QuadParams(a, b), tol=1e-12).half_map(s).value
    assert got == pytest.approx(exact_dulac_plus(a, b, s), rel=1e-9)


def test_lower_hemicycle_stays_below_axis(z0_maps):
    # starting in the infinity chart the orbit passes U1 and lands on the lower near section
    chart, z = z0_maps._start(0.002, "l")
    hit = z0_maps._fine.run(chart, z, 1.0, direction=-1.0, far=False)
    assert hit.segments > 1
    assert -1.0 < hit.point[1] < 0.0


def test_center_difference_vanishes():
    samples = dulac_difference(Z0, np.geomspace(1e-3, 0.1, 6), tol=1e-12)
    assert np.all(np.abs(samples.value) <= 10 * 1e-12 + samples.err)
    assert count_zeros(samples).count == 0


def test_floor_enforced():
    with pytest.raises(ValueError):
        dulac_difference(Z0, [1e-4, 1e-2])
    with pytest.raises(ValueError):
        DulacMaps(Z0).half_map(-0.1)


@pytest.mark.parametrize(
    "mu", [QuadParams(-1.5, 1.0, 0.0, 0.01, 0.02), QuadParams(-0.5, 0.7, 0.0, -0.02, 0.01), QuadParams(-1.2, 0.4, 0.0, 0.0, 0.03)]
)
def test_involution_identity(mu):
    """D_l(s; mu) = -eta^-2 D_u(eta^-2 s; sigma(mu))."""
    eta2 = mu.eta_b**2
    lower = DulacMaps(mu, tol=1e-12)
    upper = DulacMaps(involution(mu), tol=1e-12)
    for s in (0.02, 0.05, 0.1):
        lhs = lower.difference(s, "l")
        rhs = upper.difference(s / eta2, "u")
        assert lhs.value == pytest.approx(-rhs.value / eta2, abs=lhs.err + rhs.err / eta2 + 1e-13)


def test_eps0_gives_positive_upper_difference():
    maps = DulacMaps(QuadParams(-0.5, 0.5, 1e-3, 0.0, 0.0), tol=1e-12)
    vals = [maps.difference(s) for s in (0.002, 0.01, 0.05)]
    assert all(v.value > v.err for v in vals)


@pytest.mark.parametrize("mu", [QuadParams(-0.5, 0.5, 0.0, 0.02, 0.0), QuadParams(-1.5, 1.0, 0.0, 0.0, -0.03)])
def test_return_map_sign_follows_d0(mu):
    d0 = d0_closed(mu)
    assert abs(d0) > 0.01
    for m in (mu, mu.with_eps(eps1=-mu.eps1, eps2=-mu.eps2)):
        r = DulacMaps(m, tol=1e-12).return_map(0.005)
        assert np.sign(r.value) == np.sign(d0_closed(m))
        assert abs(r.value) > r.err


def test_center_return_map_is_identity(z0_maps):
    r = z0_maps.return_map(0.01)
    assert abs(r.value) <= max(r.err, 1e-12)


def test_tolerance_halving_within_error_estimate():
    mu = QuadParams(-0.7, 1.2, 0.0, 0.01, -0.02)
    coarse, fine = DulacMaps(mu, tol=1e-10), DulacMaps(mu, tol=5e-11)
    for s in (0.002, 0.02, 0.1):
        a, b = coarse.difference(s), fine.difference(s)
        assert abs(a.value - b.value) < a.err


class TestCountZeros:
    @staticmethod
    def _linear(s):
        return MapValue(s - 0.05, 1e-14)

    def test_single_zero(self):
        samples = sample_map(self._linear, np.linspace(0.01, 0.1, 10))
        rep = count_zeros(samples, refine=self._linear)
        assert rep.count == 1
        assert rep.zeros[0] == pytest.approx(0.05, abs=1e-10)
        assert abs(rep.residuals[0]) < 1e-10
        lo, hi = rep.brackets[0]
        assert lo < 0.05 < hi

    def test_no_zero(self):
        samples = sample_map(lambda s: MapValue(s + 1.0, 1e-14), np.linspace(0.01, 0.1, 10))
        assert count_zeros(samples).count == 0

    def test_untrusted_samples_are_not_counted(self):
        s = np.array([0.01, 0.02, 0.03, 0.04])
        samples = MapSamples(s, np.array([1.0, 1e-9, -1e-9, 1.0]), np.full(4, 1e-6))
        rep = count_zeros(samples)
        assert rep.count == 0
        assert rep.ambiguous == [0.02, 0.03]
        assert set(json.loads(rep.to_json())) == {"label", "count", "brackets", "zeros", "residuals", "ambiguous"}


def test_csv_round_trip():
    samples = MapSamples(np.array([0.01, 0.1]), np.array([1.5e-3, -2.25e-7]), np.array([1e-15, 2e-15]), "Du")
    text = samples.to_csv()
    assert text.splitlines()[0] == "s,value,err"
    back = MapSamples.from_csv(text)
    assert np.array_equal(back.s, samples.s) and np.array_equal(back.value, samples.value)
    with pytest.raises(ValueError):
        MapSamples.from_csv("a,b,c\n1,2,3\n")


def test_hunt_stage_one_pattern():
    # running out of budget right after stage 1 still reports that stage
    res = hunt_simultaneous(-1.5, 1.0, budget=8)
    assert not res.success
    assert res.stages and res.stages[0]["stage"] == 1


def test_hunt_rejects_wrong_branch():
    res = hunt_simultaneous(-0.5, 1.0)
    assert not res.success and res.evaluations == 0


def test_center_projection_of_hunt_point_has_no_zeros():
    nu = phi_params(QuadParams(-1.5, 1.0, 0.0, 0.01, 0.02))
    mu = phi_inverse(type(nu)(0.0, 0.0, 0.0, nu.nu4, nu.nu5))
    maps = DulacMaps(mu, tol=1e-10)
    grid = np.geomspace(1e-3, 0.19, 8)
    for side in ("u", "l"):
        assert count_zeros(sample_map(lambda s: maps.difference(s, side), grid)).count == 0


@pytest.mark.slow
def test_hunt_succeeds_on_extended_window():
    res = hunt_simultaneous(-1.5, 1.0, s_range=(1e-6, 0.2), grid=32)
    assert res.success, res.message
    assert res.upper.count >= 2 and res.lower.count >= 1
    nu = res.nu
    assert nu.nu2 * nu.nu3 > 0 and nu.nu1 * nu.nu2 < 0


def test_flow_errors(z0_maps):
    # the orbit from (0, 2) crosses x = 0 near the axis, not on the far section
    with pytest.raises(FlowError):
        z0_maps._fine.run(AFFINE, (0.0, 2.0), 1.0, direction=-1.0, far=True)
    with pytest.raises(FlowError):
        Propagator(z0_maps.atlas, t_max=1e-3).run(AFFINE, (0.0, 2.0), 1.0, direction=-1.0)
