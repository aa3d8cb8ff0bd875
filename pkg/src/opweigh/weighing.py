"""Weighing a perturbation by simulated observations of the balancing control.

Switching on a perturbation with amplitude eps moves the balancing value
of the control variable.  Two scale readings quantify the move:

* the first kind integrates the perturbation bracket along the
  constrained path, available as a power series in eps whose
  coefficients come from the bilinear bracket series;
* the second kind integrates the control response of the gauge output
  over the traversed control interval, evaluated here by adaptive
  quadrature with the exciting variable recovered from the constraint at
  every node.

Their sum vanishes along the constrained path, which is the balance
identity used to cross-check both routes.  Recovery routines fit scale
coefficients to (optionally noisy) samples of the second reading the way
an experiment would, and the exchange construction re-expresses the
second reading as a first reading of the role-swapped problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraint import BalancePoint, PreparedProblem, balance_at, refine_root
from .errors import NumericsError
from .families import CombinedFamily, SystemParams
from .series import SeriesBundle, bilinear_series, perturbation_series
from .spectral import adjoint_flux, flux, flux_pair, gauge_output

__all__ = [
    "WeightScale",
    "RecoveredScale",
    "WeighingReport",
    "differential_weight",
    "weight_scale",
    "control_response",
    "weighing_integral",
    "recover_coefficients",
    "weighing_report",
    "second_kind_via_exchange",
    "realization_error",
]

_PATH_SAMPLES = 48
_MAX_PANELS = 256
_COND_SWITCH = 1e10


@dataclass
class WeightScale:
    """Scale coefficients <dT>_n of the first-kind reading."""

    coeffs: np.ndarray
    bundle: SeriesBundle | None = None

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def first_kind(self, eps: float) -> float:
        """Z_1(eps): the integrated perturbation bracket along the path."""
        n = np.arange(len(self.coeffs))
        return float(np.sum(self.coeffs * eps ** (n + 1) / (n + 1)))

    def derivative(self, eps: float) -> float:
        """d Z_1 / d eps, the running perturbation bracket."""
        return float(np.polynomial.polynomial.polyval(eps, self.coeffs))


@dataclass
class RecoveredScale:
    """Scale coefficients recovered from sampled readings."""

    coeffs: np.ndarray
    uncertainties: np.ndarray
    cond: float
    chebyshev: bool


@dataclass
class WeighingReport:
    """Per-sample readings of both scale kinds and the recovered coefficients."""

    eps: np.ndarray
    z_bal: np.ndarray            # balancing control in the caller's coordinates
    z1: np.ndarray               # first-kind reading, series route
    z2: np.ndarray               # second-kind reading, quadrature route
    balance_residual: np.ndarray  # z1 + z2, zero along the exact path
    weight: WeightScale
    recovered: RecoveredScale
    samples: np.ndarray          # the (noisy) readings fed to the recovery
    noise: float
    seed: int


def control_response(t2: CombinedFamily, eps: float, z: float) -> float:
    """Control derivative of the gauge output at a point of the (eps, z) plane.

    Evaluated exactly through the bracket of the control-derivative of
    the parameters, with fluxes solved at the point itself.
    """
    t = t2.at_eps(eps)
    v = t(z)
    d = t.derivative()(z)
    ph = flux(v.L, v.Q)
    pd = adjoint_flux(v.L, v.Qdag)
    return float(pd @ (d.L @ ph + d.Q) + d.Qdag @ ph)


def differential_weight(t: SystemParams, bp: BalancePoint) -> float:
    """Differential weight <T'> at the balance point, with an observability check.

    The bracket value must agree with a centered difference of the gauge
    output to within 1e-6 relative; otherwise the configured problem does
    not observe the control the way the scale assumes.
    """
    z0 = bp.z_bal
    v = t(z0)
    d = t.derivative()(z0)
    ph = flux(v.L, v.Q)
    pd = adjoint_flux(v.L, v.Qdag)
    br = float(pd @ (d.L @ ph + d.Q) + d.Qdag @ ph)

    h = 1e-6 * max(1.0, abs(z0))
    vp = t(z0 + h)
    vm = t(z0 - h)
    fd = (gauge_output(vp.L, vp.Q, vp.Qdag) - gauge_output(vm.L, vm.Q, vm.Qdag)) / (2 * h)
    if abs(br - fd) > 1e-6 * max(abs(br), abs(fd), 1e-6):
        raise NumericsError("observability mismatch")
    if abs(br) <= 1e-12 * max(abs(fd), 1.0):
        raise NumericsError("zero differential weight")
    return br


def weight_scale(t: SystemParams, dt: SystemParams, bp: BalancePoint,
                 order: int = 8) -> WeightScale:
    """First-kind scale coefficients from the perturbation series."""
    bundle = perturbation_series(t, dt, bp, order)
    ds = bilinear_series("delta", bundle)
    return WeightScale(coeffs=ds.coeffs, bundle=bundle)


def _constrained_path(prep: PreparedProblem, eps: float,
                      samples: int = _PATH_SAMPLES) -> tuple[np.ndarray, np.ndarray]:
    """Balancing values along eps in [0, eps], as matched sample arrays."""
    es = np.linspace(0.0, eps, samples + 1)
    zs = np.empty_like(es)
    zs[0] = 0.0
    for i in range(1, len(es)):
        zs[i] = balance_at(prep, float(es[i])).z_bal
    dz = np.diff(zs)
    if not (np.all(dz > 0) or np.all(dz < 0)):
        raise NumericsError("inverse function not resolvable")
    return es, zs


def _invert_path(prep: PreparedProblem, es: np.ndarray, zs: np.ndarray,
                 z: float) -> float:
    """The exciting value at which the constrained path passes through z."""
    t2 = prep.t2

    def g(e: float) -> float:
        v = t2(e, z)
        return gauge_output(v.L, v.Q, v.Qdag) - 1.0

    if zs[-1] > zs[0]:
        idx = int(np.clip(np.searchsorted(zs, z), 1, len(zs) - 1))
    else:
        idx = int(np.clip(np.searchsorted(-zs, -z), 1, len(zs) - 1))
    a, b = float(es[idx - 1]), float(es[idx])
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return a
    if gb == 0.0:
        return b
    if ga * gb > 0:
        # z falls between path samples whose constraint residuals do not
        # bracket; widen to the neighbouring segments before giving up
        lo = max(idx - 2, 0)
        hi = min(idx + 1, len(es) - 1)
        a, b = float(es[lo]), float(es[hi])
        ga, gb = g(a), g(b)
        if ga * gb > 0:
            raise NumericsError("inverse function not resolvable")
    e_root, _ = refine_root(g, a, b, ga, gb)
    return e_root


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def weighing_integral(prep: PreparedProblem, eps: float,
                      quad_tol: float = 1e-9) -> float:
    """Second-kind reading: control response integrated over the traversed interval.

    The integrand is the control derivative of the gauge output with the
    exciting variable pinned to the constraint at every node.  Composite
    16-point Gauss-Legendre panels are doubled until two successive
    readings agree to quad_tol relative.
    """
    if eps == 0.0:
        return 0.0
    es, zs = _constrained_path(prep, eps)
    z_end = float(zs[-1])
    if z_end == 0.0:
        return 0.0

    # criticality guard along the path
    t2 = prep.t2
    dets = [np.linalg.slogdet(t2(float(e), float(z)).L)[0] for e, z in zip(es, zs)]
    if any(d == 0 for d in dets) or (min(dets) < 0 < max(dets)):
        raise NumericsError("path crosses criticality")

    def integrand(z: float) -> float:
        e = _invert_path(prep, es, zs, z)
        return control_response(t2, e, z)

    previous = None
    for panels in (2 ** k for k in range(0, _MAX_PANELS.bit_length())):
        if panels > _MAX_PANELS:
            break
        edges = np.linspace(0.0, z_end, panels + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            half = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            for x, w in zip(_GL_NODES, _GL_WEIGHTS):
                total += w * half * integrand(mid + half * x)
        if previous is not None and abs(total - previous) <= quad_tol * max(1.0, abs(total)):
            return total
        previous = total
    raise NumericsError("quadrature not converged")


def recover_coefficients(eps_samples: np.ndarray, readings: np.ndarray,
                         order: int = 8) -> RecoveredScale:
    """Scale coefficients fitted to sampled first-kind readings.

    Fits a polynomial of degree order + 1 with zero constant term through
    the samples plus the exact origin, then converts the integrated
    coefficients back to scale coefficients.  Falls back to a mapped
    Chebyshev basis when the plain design is ill-conditioned.
    """
    eps = np.asarray(eps_samples, dtype=float).ravel()
    vals = np.asarray(readings, dtype=float).ravel()
    if eps.shape != vals.shape:
        raise ValueError("sample arrays must have matching shapes")
    n_coef = order + 1
    if len(eps) < n_coef:
        raise NumericsError("insufficient samples")
    eps = np.concatenate([eps, [0.0]])
    vals = np.concatenate([vals, [0.0]])

    powers = np.arange(1, n_coef + 1)
    design = eps[:, None] ** powers[None, :]
    cond = float(np.linalg.cond(design))
    chebyshev = cond > _COND_SWITCH
    if not chebyshev:
        basis_to_mono = np.eye(n_coef)
    else:
        lo, hi = float(np.min(eps)), float(np.max(eps))
        if hi <= lo:
            raise NumericsError("rank-deficient sample set")
        design = np.empty((len(eps), n_coef))
        basis_to_mono = np.zeros((n_coef, n_coef))
        for k in range(1, n_coef + 1):
            cheb = np.polynomial.Chebyshev([0.0] * k + [1.0], domain=[lo, hi])
            mono = cheb.convert(kind=np.polynomial.Polynomial)
            offset = float(mono(0.0))
            design[:, k - 1] = mono(eps) - offset
            coef = np.zeros(n_coef + 1)
            coef[:len(mono.coef)] = mono.coef
            coef[0] -= offset
            basis_to_mono[:, k - 1] = coef[1:]
        cond = float(np.linalg.cond(design))

    sol, resid, rank, _ = np.linalg.lstsq(design, vals, rcond=None)
    if rank < n_coef:
        raise NumericsError("rank-deficient sample set")
    integrated = basis_to_mono @ sol       # coefficients of eps^1 .. eps^(order+1)

    dof = max(len(vals) - rank, 1)
    rss = float(resid[0]) if len(resid) else float(np.sum((design @ sol - vals) ** 2))
    sigma2 = rss / dof
    cov = np.linalg.pinv(design.T @ design) * sigma2
    cov_mono = basis_to_mono @ cov @ basis_to_mono.T
    var = np.clip(np.diag(cov_mono), 0.0, None)

    n = np.arange(n_coef)
    return RecoveredScale(
        coeffs=(n + 1) * integrated,
        uncertainties=(n + 1) * np.sqrt(var),
        cond=cond,
        chebyshev=chebyshev,
    )


def weighing_report(prep: PreparedProblem, eps_values: np.ndarray,
                    order: int = 8, quad_tol: float = 1e-9,
                    noise: float = 0.0, seed: int = 0,
                    recover_order: int | None = None) -> WeighingReport:
    """Run the full weighing: both scale readings, identity residuals, recovery.

    recover_order defaults to the series order capped at one below the
    number of nonzero samples, the largest determined fit.
    """
    differential_weight(prep.t2.base, prep.bp0)
    ws = weight_scale(prep.t2.base, prep.t2.pert, prep.bp0, order)

    eps = np.asarray(eps_values, dtype=float).ravel()
    z_bal = np.empty_like(eps)
    z1 = np.empty_like(eps)
    z2 = np.empty_like(eps)
    for i, e in enumerate(eps):
        e = float(e)
        z_bal[i] = prep.raw_z0 + (0.0 if e == 0.0 else balance_at(prep, e).z_bal)
        z1[i] = ws.first_kind(e)
        z2[i] = weighing_integral(prep, e, quad_tol)

    samples = -z2
    if noise > 0.0:
        rng = np.random.default_rng(seed)
        samples = samples + rng.uniform(-noise, noise, size=len(samples))
    nonzero = eps != 0.0
    if recover_order is None:
        recover_order = min(order, max(int(np.sum(nonzero)) - 1, 0))
    recovered = recover_coefficients(eps[nonzero], samples[nonzero], recover_order)

    return WeighingReport(
        eps=eps, z_bal=z_bal, z1=z1, z2=z2,
        balance_residual=z1 + z2,
        weight=ws, recovered=recovered, samples=samples,
        noise=noise, seed=seed,
    )


def second_kind_via_exchange(prep: PreparedProblem, order: int = 8) -> WeightScale:
    """First-kind scale of the role-swapped problem.

    Exchanging control and exciting variable turns the second-kind
    reading into a first-kind reading taken at the balancing value of the
    original control: Z_2-type information becomes series-accessible.
    Requires degree-1 control dependence.
    """
    ex = prep.t2.exchange()
    v0 = ex.base(0.0)
    pair = flux_pair(v0.L, v0.Q, v0.Qdag)
    bp = BalancePoint(z_bal=0.0, residual=pair.gauge - 1.0, pair=pair)
    return weight_scale(ex.base, ex.pert, bp, order)


def realization_error(a: WeighingReport, b: WeighingReport) -> np.ndarray:
    """Per-sample difference of the second-kind readings of two realizations.

    Both reports must share the eps grid.  Gauge-rescaled realizations of
    the same problem agree up to rounding in the rescale itself.
    """
    if a.eps.shape != b.eps.shape or not np.array_equal(a.eps, b.eps):
        raise ValueError("reports sample different eps grids")
    return a.z2 - b.z2
