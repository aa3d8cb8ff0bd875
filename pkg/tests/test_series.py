"""Recursion relations for the constrained flux and control series."""

import numpy as np
import pytest

from opweigh.constraint import balance, prepare
from opweigh.errors import NumericsError
from opweigh.families import (
    CombinedFamily,
    GaugeReference,
    PolyMatrix,
    PolyVector,
    SystemParams,
    is_remote,
)
from opweigh.oracles import (
    WORKED_B,
    WORKED_C,
    WORKED_Q,
    WORKED_QDAG,
    brute_force_oracle,
    oneD_problem,
    twoD_oracle,
    worked_twoD_problem,
)
from opweigh.series import (
    ScalarSeries,
    VectorSeries,
    bilinear_series,
    bracket_table,
    compose,
    linear_control_series,
    perturbation_series,
    remainder_terms,
)
from opweigh.spectral import (
    adjoint_flux,
    flux,
    fundamental_eigenpair,
    harmonic_solve,
    project_harmonic_adjoint,
)
from conftest import random_instance

ORDER = 8


def cubic_family(seed: int, dim: int = 3) -> SystemParams:
    rng = np.random.default_rng(seed)
    return SystemParams(
        PolyMatrix(rng.standard_normal((4, dim, dim))),
        PolyVector(rng.standard_normal((3, dim))),
        PolyVector(rng.standard_normal((2, dim))),
    )


def prepared_bundle(seed: int, dim: int = 4, order: int = ORDER, **kw):
    inst = random_instance(seed, dim, **kw)
    if inst is None:
        return None
    t2, gauge = inst
    try:
        prep = prepare(t2, gauge, (-0.08, 0.08))
        bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, order)
    except NumericsError:
        return None
    return prep, bundle


def test_scalar_series_evaluates_like_a_polynomial():
    s = ScalarSeries(np.array([1.0, -2.0, 0.5]))
    for e in (0.0, 0.3, -1.2):
        assert abs(s(e) - (1.0 - 2.0 * e + 0.5 * e * e)) <= 1e-15
    assert s.order == 2


def test_vector_series_evaluates_coefficientwise():
    c = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, -1.0]])
    v = VectorSeries(c)
    e = 0.7
    expect = c[0] + e * c[1] + e * e * c[2]
    assert np.abs(v(e) - expect).max() <= 1e-15
    assert v.order == 2 and v.dim == 2


def test_remainder_terms_low_orders():
    t = cubic_family(1)
    z0, z1, z2, z3 = 0.2, 0.7, -0.4, 0.15
    zs = ScalarSeries(np.array([z0, z1, z2, z3]))
    tay = t.taylor_values(z0, 3)

    r0 = remainder_terms(t, zs, 0)
    assert np.array_equal(r0.L, tay[0].L)
    r1 = remainder_terms(t, zs, 1)
    assert not np.any(r1.L) and not np.any(r1.Q) and not np.any(r1.Qdag)
    # order two: second derivative against z1 squared over two
    r2 = remainder_terms(t, zs, 2)
    assert np.abs(r2.L - 0.5 * z1 ** 2 * tay[2].L).max() <= 1e-13
    assert np.abs(r2.Q - 0.5 * z1 ** 2 * tay[2].Q).max() <= 1e-13
    # order three: the two partitions 1+1+1 and 1+2
    r3 = remainder_terms(t, zs, 3)
    expect_L = z1 ** 3 / 6.0 * tay[3].L + z1 * z2 * tay[2].L
    assert np.abs(r3.L - expect_L).max() <= 1e-13


def test_remainder_vanishes_for_linear_families():
    lin = SystemParams(
        PolyMatrix(np.random.default_rng(2).standard_normal((2, 3, 3))),
        PolyVector.constant(np.ones(3)),
        PolyVector.constant(np.ones(3)),
    )
    zs = ScalarSeries(np.array([0.1, 0.5, -0.2, 0.3]))
    for n in range(2, 4):
        r = remainder_terms(lin, zs, n)
        assert not np.any(r.L) and not np.any(r.Q) and not np.any(r.Qdag)


def test_compose_reproduces_exact_polynomial_composition():
    t = cubic_family(3)
    # degree-3 family composed with a quadratic control series has degree
    # nine; padding the series keeps the truncation exact
    z0, z1, z2 = 0.1, 0.6, -0.3
    zs = ScalarSeries(np.concatenate([[z0, z1, z2], np.zeros(7)]))
    vals = compose(t, zs)
    for e in (0.0, 0.4, -0.9, 1.3):
        z = z0 + z1 * e + z2 * e * e
        direct = t(z)
        acc_L = sum(v.L * e ** n for n, v in enumerate(vals))
        acc_Q = sum(v.Q * e ** n for n, v in enumerate(vals))
        assert np.abs(acc_L - direct.L).max() <= 1e-11
        assert np.abs(acc_Q - direct.Q).max() <= 1e-11


def test_worked_instance_series_is_exact():
    t2, gauge, bracket = worked_twoD_problem()
    prep = prepare(t2, gauge, bracket)
    bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, ORDER)
    o = twoD_oracle(WORKED_B, WORKED_C, WORKED_Q, WORKED_QDAG)
    # balancing series z(eps) = eps exactly
    expect_z = np.zeros(ORDER + 1)
    expect_z[1] = o.constants.alpha2
    assert np.abs(bundle.z.coeffs - expect_z).max() <= 1e-12
    for p in range(ORDER + 1):
        assert np.abs(bundle.flux.coeffs[p] - o.flux_coeff(p)).max() <= 1e-12
        assert np.abs(bundle.adjoint.coeffs[p] - o.adjoint_coeff(p)).max() <= 1e-12
    assert bundle.z_adjoint_gap <= 1e-12
    # geometric flux tail decays with ratio one half
    norms = np.linalg.norm(bundle.flux.coeffs, axis=1)
    for p in range(2, ORDER + 1):
        assert abs(norms[p] / norms[p - 1] - 0.5) <= 1e-10


def test_oneD_series_is_exact():
    B, C, Q, Qd = 2.0, 1.0, 3.0, 1.0
    t2, gauge = oneD_problem(B, C, Q, Qd)
    prep = prepare(t2, gauge, (-3.0, -0.6))
    bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, ORDER)
    expect_z = np.zeros(ORDER + 1)
    expect_z[1] = -C / B
    assert np.abs(bundle.z.coeffs - expect_z).max() <= 1e-12
    expect_flux = np.zeros((ORDER + 1, 1))
    expect_flux[0, 0] = 1.0 / Qd
    assert np.abs(bundle.flux.coeffs - expect_flux).max() <= 1e-12
    assert abs(bundle.adjoint.coeffs[0, 0] - 1.0 / Q) <= 1e-12
    assert np.abs(bundle.adjoint.coeffs[1:]).max() <= 1e-12


def test_first_order_closed_forms(rng):
    checked = 0
    seed = 0
    while checked < 10:
        out = prepared_bundle(seed, dim=4)
        seed += 1
        if out is None:
            continue
        prep, bundle = out
        checked += 1
        t, dt = prep.t2.base, prep.t2.pert
        v0 = t(0.0)
        sd = fundamental_eigenpair(v0.L)
        P0 = flux(v0.L, v0.Q)
        Pd0 = adjoint_flux(v0.L, v0.Qdag)
        T1 = t.derivative()(0.0)
        D0 = dt(0.0)

        def full(v, pd):
            return float(pd @ (v.L @ P0 + v.Q) + v.Qdag @ P0)

        # balancing slope from the ratio of full differentials
        z1 = -full(D0, Pd0) / full(T1, Pd0)
        assert abs(bundle.z.coeffs[1] - z1) <= 1e-10 * max(abs(z1), 1.0)

        # flux coefficient: fundamental amplitude plus harmonic response
        X1 = z1 * T1 + D0
        Pd0t = project_harmonic_adjoint(Pd0, sd)
        a1 = -full(X1, Pd0t) / float(v0.Qdag @ sd.phi)
        p_harm = harmonic_solve(v0.L, sd, -(X1.L @ P0 + X1.Q))
        phi1 = a1 * sd.phi + p_harm
        scale = max(np.abs(phi1).max(), 1.0)
        assert np.abs(bundle.flux.coeffs[1] - phi1).max() <= 1e-10 * scale


def test_second_order_from_bracket_tables(rng):
    # the order-two balancing coefficient restated through the public
    # bracket tables: remainder, slope coupling, and edge terms
    checked = 0
    seed = 50
    while checked < 10:
        out = prepared_bundle(seed, dim=3)
        seed += 1
        if out is None:
            continue
        prep, bundle = out
        checked += 1
        t, dt = prep.t2.base, prep.t2.pert
        z1 = bundle.z.coeffs[1]
        prime = bundle.brackets["prime"]
        delta = bundle.brackets["delta"]
        tay = t.taylor_values(0.0, 2)
        t2_rem = bracket_table("rem", bundle, value=0.5 * z1 ** 2 * tay[2])
        dprime = bracket_table("dprime", bundle, value=dt.derivative()(0.0))
        known = (z1 * (dprime.entry(0, 0) + prime.entry(0, 1))
                 + t2_rem.entry(0, 0) + delta.entry(0, 1))
        z2 = -known / prime.entry(0, 0)
        assert abs(bundle.z.coeffs[2] - z2) <= 1e-10 * max(abs(z2), 1.0)


def test_series_matches_direct_solves_at_small_eps(rng):
    checked = 0
    seed = 100
    while checked < 5:
        out = prepared_bundle(seed, dim=5)
        seed += 1
        if out is None:
            continue
        prep, bundle = out
        checked += 1
        for eps in (1e-3, -1e-3):
            bp = balance(prep.t2.at_eps(eps), 1.0, prep.bracket)
            tail = abs(bundle.z.coeffs[-1] * eps ** ORDER) + 1e-12
            assert abs(bundle.z(eps) - bp.z_bal) <= 100 * tail
            v = prep.t2(eps, bp.z_bal)
            ph = flux(v.L, v.Q)
            assert np.abs(bundle.flux(eps) - ph).max() <= 1e-9 * max(np.abs(ph).max(), 1.0)


def test_series_matches_brute_force_fit():
    matched = 0
    seed = 200
    while matched < 3:
        inst = random_instance(seed, dim=3, pert_scale=0.05)
        seed += 1
        if inst is None:
            continue
        t2, gauge = inst
        try:
            prep = prepare(t2, gauge, (-0.08, 0.08))
            bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, ORDER)
            h = 1e-2
            grid = np.concatenate([-h * np.arange(4, 0, -1), h * np.arange(1, 5)])
            fit = brute_force_oracle(prep.t2, 1.0, prep.bracket, eps_grid=grid)
        except NumericsError:
            continue
        # reject fits whose own truncation tail would pollute the comparison
        tail = max(abs(fit.z_coeffs[7]), np.abs(fit.flux_coeffs[7]).max()) * (4 * h) ** 7
        if tail > 1e-11:
            continue
        matched += 1
        for n in range(5):
            assert abs(bundle.z.coeffs[n] - fit.z_coeffs[n]) <= 1e-6
            assert np.abs(bundle.flux.coeffs[n] - fit.flux_coeffs[n]).max() <= 1e-6
            assert np.abs(bundle.adjoint.coeffs[n] - fit.adjoint_coeffs[n]).max() <= 1e-6


def test_homogeneity_in_the_perturbation(rng):
    out = prepared_bundle(6, dim=4)
    assert out is not None
    prep, bundle = out
    dt = prep.t2.pert
    dt2 = SystemParams(dt.L.scaled(2.0), dt.Q.scaled(2.0), dt.Qdag.scaled(2.0))
    doubled = perturbation_series(prep.t2.base, dt2, prep.bp0, ORDER)
    for n in range(ORDER + 1):
        w = 2.0 ** n
        assert abs(doubled.z.coeffs[n] - w * bundle.z.coeffs[n]) <= \
            1e-12 * max(w * abs(bundle.z.coeffs[n]), 1e-6)
        assert np.abs(doubled.flux.coeffs[n] - w * bundle.flux.coeffs[n]).max() <= \
            1e-12 * max(w * np.abs(bundle.flux.coeffs[n]).max(), 1e-6)


def test_linear_route_agrees_with_general_route():
    found = 0
    seed = 300
    while found < 5:
        inst = random_instance(seed, dim=4, cubic=False)
        seed += 1
        if inst is None:
            continue
        t2, gauge = inst
        try:
            prep = prepare(t2, gauge, (-0.08, 0.08))
            general = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, ORDER)
            special = linear_control_series(prep.t2.base, prep.t2.pert, prep.bp0, ORDER)
        except NumericsError:
            continue
        found += 1
        assert np.abs(general.z.coeffs - special.z.coeffs).max() <= 1e-13
        assert np.abs(general.flux.coeffs - special.flux.coeffs).max() <= 1e-13
        assert np.abs(general.adjoint.coeffs - special.adjoint.coeffs).max() <= 1e-13


def test_linear_route_rejects_nonlinear_control():
    inst = random_instance(11, dim=3, cubic=True)
    assert inst is not None
    t2, gauge = inst
    prep = prepare(t2, gauge, (-0.08, 0.08))
    with pytest.raises(NumericsError, match="control not linear"):
        linear_control_series(prep.t2.base, prep.t2.pert, prep.bp0, 4)


def test_adjoint_recursion_gap_is_small(rng):
    checked = 0
    seed = 400
    while checked < 10:
        out = prepared_bundle(seed, dim=4)
        seed += 1
        if out is None:
            continue
        _, bundle = out
        checked += 1
        zscale = max(np.abs(bundle.z.coeffs).max(), 1.0)
        assert bundle.z_adjoint_gap <= 1e-8 * zscale


def test_bracket_table_order_exceeded():
    out = prepared_bundle(6, dim=3, order=4)
    assert out is not None
    _, bundle = out
    tab = bundle.brackets["prime"]
    assert tab.order == 4
    with pytest.raises(NumericsError, match="order exceeded"):
        tab.entry(5, 0)
    with pytest.raises(NumericsError, match="order exceeded"):
        bilinear_series("delta", bundle, order=5)


def test_bilinear_delta_series_on_worked_instance():
    t2, gauge, bracket = worked_twoD_problem()
    prep = prepare(t2, gauge, bracket)
    bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, ORDER)
    w = bilinear_series("delta", bundle)
    for n in range(ORDER + 1):
        assert abs(w.coeffs[n] + 0.5 ** (n + 1)) <= 1e-12


def test_bilinear_series_match_gauge_output_derivatives():
    # the delta and prime series evaluate the two partial derivatives of
    # the gauge output along the constrained path
    t2, gauge, bracket = worked_twoD_problem()
    prep = prepare(t2, gauge, bracket)
    bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, 20)
    o = twoD_oracle(WORKED_B, WORKED_C, WORKED_Q, WORKED_QDAG)
    wd = bilinear_series("delta", bundle)
    wp = bilinear_series("prime", bundle)
    h = 1e-6
    for eps in (0.0, 0.1, 0.3):
        z = o.constants.alpha2 * eps
        d_eps = (o.R(eps + h, z) - o.R(eps - h, z)) / (2 * h)
        d_z = (o.R(eps, z + h) - o.R(eps, z - h)) / (2 * h)
        assert abs(wd(eps) - d_eps) <= 1e-7
        assert abs(wp(eps) - d_z) <= 1e-7


def test_remote_perturbation_reduces_to_diagonal_sums():
    found = 0
    seed = 500
    while found < 5:
        inst = random_instance(seed, dim=4, cubic=False, remote=True,
                               excite_sources=False)
        seed += 1
        if inst is None:
            continue
        t2, gauge = inst
        assert is_remote(t2.pert)
        try:
            prep = prepare(t2, gauge, (-0.08, 0.08))
            bundle = perturbation_series(prep.t2.base, prep.t2.pert, prep.bp0, ORDER)
        except NumericsError:
            continue
        found += 1
        w = bilinear_series("delta", bundle)
        tab = bundle.brackets["delta"]
        for n in range(ORDER + 1):
            diag = sum(tab.entry(p, n - p) for p in range(n + 1))
            assert abs(w.coeffs[n] - diag) <= 1e-12 * max(abs(diag), 1.0)


def test_zero_differential_weight_detected():
    # a base family with no control dependence has vanishing weight
    dim = 2
    t = SystemParams(
        PolyMatrix.constant(np.diag([-1.0, -2.0])),
        PolyVector.constant(np.array([1.0, 0.0])),
        PolyVector.constant(np.array([1.0, 1.0])),
    )
    dt = SystemParams(
        PolyMatrix.constant(0.1 * np.eye(dim)),
        PolyVector.zero(dim),
        PolyVector.zero(dim),
    )
    bp = balance_point_at_origin(t)
    with pytest.raises(NumericsError, match="zero differential weight"):
        perturbation_series(t, dt, bp, 4)


def balance_point_at_origin(t: SystemParams):
    from opweigh.constraint import BalancePoint
    from opweigh.spectral import flux_pair

    v = t(0.0)
    return BalancePoint(z_bal=0.0, residual=0.0, pair=flux_pair(v.L, v.Q, v.Qdag))
