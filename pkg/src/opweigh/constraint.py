"""Constraining the control variable to a required gauge output.

The balancing value z_bal solves R(T(z)) = R0 inside a user-supplied
bracket.  The gauge output has poles where det L(z) crosses zero, so the
bracket is probed first: any determinant sign flip or near-zero probe is
rejected as criticality inside the bracket, and multiple sign changes of
R - R0 are rejected as ambiguity.  Root refinement alternates secant and
bisection steps; no derivatives are used.

After the first balance of the unperturbed problem the families are
recentered so the reference balancing value sits at zero; everything
downstream (series, weighing) works in that shifted variable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .families import CombinedFamily, GaugeReference, SystemParams
from .spectral import SpectralData, flux_pair, fundamental_eigenpair, gauge_output

__all__ = [
    "BalancePoint",
    "PreparedProblem",
    "balance",
    "constrained_value",
    "gauge_rescale",
    "shift_to_balance",
    "prepare",
    "balance_at",
]

_SCAN_POINTS = 64
_MAX_ITER = 200
_RESID_RTOL = 1e-12


@dataclass
class BalancePoint:
    """A balancing value with its residual and constrained solutions."""

    z_bal: float
    residual: float
    pair: "object"  # FluxPair


def _det_sign_and_smallness(L: np.ndarray) -> tuple[float, bool]:
    sign, _ = np.linalg.slogdet(L)
    svals = np.linalg.svd(L, compute_uv=False)
    near = svals[-1] < 1e-13 * max(svals[0], 1e-300)
    return sign, near


def balance(t: SystemParams, gauge: GaugeReference | float,
            bracket: tuple[float, float]) -> BalancePoint:
    """Find the unique z in the bracket with R(T(z)) = R0.

    pre: the bracket excludes criticality (checked with determinant
    probes) and contains exactly one sign change of R - R0.
    post: relative residual |R(T(z_bal)) - R0| <= 1e-12 |R0|.
    """
    r0 = gauge.R0 if isinstance(gauge, GaugeReference) else float(gauge)
    lo, hi = float(bracket[0]), float(bracket[1])
    zs = np.linspace(lo, hi, _SCAN_POINTS)

    signs = np.empty(_SCAN_POINTS)
    for i, z in enumerate(zs):
        s, near = _det_sign_and_smallness(t.L(z))
        if near or s == 0.0:
            raise NumericsError("criticality inside bracket")
        signs[i] = s
    if np.any(signs[:-1] * signs[1:] < 0):
        raise NumericsError("criticality inside bracket")

    def f(z: float) -> float:
        v = t(z)
        return gauge_output(v.L, v.Q, v.Qdag) - r0

    fs = np.array([f(z) for z in zs])
    exact = np.flatnonzero(fs == 0.0)
    crossings = np.flatnonzero(fs[:-1] * fs[1:] < 0.0)
    n_roots = len(exact) + len(crossings)
    if n_roots == 0:
        raise NumericsError("no sign change in bracket")
    if n_roots > 1:
        raise NumericsError("non-unique root")

    if len(exact) == 1:
        z_bal, resid = float(zs[exact[0]]), 0.0
    else:
        i = crossings[0]
        z_bal, resid = refine_root(f, float(zs[i]), float(zs[i + 1]), float(fs[i]), float(fs[i + 1]))

    if abs(resid) > _RESID_RTOL * abs(r0):
        raise NumericsError("balance residual exceeds tolerance")
    v = t(z_bal)
    return BalancePoint(z_bal=z_bal, residual=abs(resid), pair=flux_pair(v.L, v.Q, v.Qdag))


def refine_root(f, a: float, b: float, fa: float, fb: float) -> tuple[float, float]:
    """Alternating secant/bisection refinement keeping the bracket valid."""
    best_z, best_f = (a, fa) if abs(fa) <= abs(fb) else (b, fb)
    eps = np.finfo(float).eps
    for it in range(_MAX_ITER):
        if abs(b - a) <= 4.0 * eps * max(abs(a), abs(b), 1.0):
            break
        use_secant = (it % 2 == 0) and fb != fa
        if use_secant:
            x = b - fb * (b - a) / (fb - fa)
            if not (min(a, b) < x < max(a, b)):
                x = 0.5 * (a + b)
        else:
            x = 0.5 * (a + b)
        fx = f(x)
        if abs(fx) < abs(best_f):
            best_z, best_f = x, fx
        if fx == 0.0:
            return x, 0.0
        if fa * fx < 0.0:
            b, fb = x, fx
        else:
            a, fa = x, fx
    return best_z, best_f


def constrained_value(fn, bp: BalancePoint):
    """Evaluate a function of the control variable at the balancing value."""
    return fn(bp.z_bal)


def gauge_rescale(obj, gauge: GaugeReference | float, alpha: float):
    """Rescale the gauge vector and the required output by the same factor.

    The constraint and the direct flux are invariant under this map; the
    adjoint flux and all gauge outputs scale linearly.
    """
    if alpha == 0.0 or not np.isfinite(alpha):
        raise NumericsError("zero gauge factor")
    r0 = gauge.R0 if isinstance(gauge, GaugeReference) else float(gauge)
    if isinstance(obj, (SystemParams, CombinedFamily)):
        return obj.scaled_gauge(alpha), GaugeReference(alpha * r0)
    raise TypeError("gauge_rescale expects SystemParams or CombinedFamily")


def shift_to_balance(obj, z0: float):
    """Recenter a family so the balancing value z0 moves to the origin."""
    return obj.recenter(float(z0))


@dataclass
class PreparedProblem:
    """A perturbed problem normalized for series and weighing work.

    The gauge is rescaled to R0 = 1, the control variable is shifted so
    the unperturbed balancing value is zero, and the reference spectral
    split is precomputed.
    """

    t2: CombinedFamily
    bracket: tuple[float, float]
    bp0: BalancePoint
    sd: SpectralData
    raw_z0: float
    gauge_factor: float  # applied to Qdag and R0 during normalization


def prepare(t2: CombinedFamily, gauge: GaugeReference | float,
            bracket: tuple[float, float]) -> PreparedProblem:
    r0 = gauge.R0 if isinstance(gauge, GaugeReference) else float(gauge)
    alpha = 1.0 / r0
    t2n, _ = gauge_rescale(t2, GaugeReference(r0), alpha)
    bp_raw = balance(t2n.at_eps(0.0), 1.0, bracket)
    z0 = bp_raw.z_bal
    t2s = shift_to_balance(t2n, z0)
    sbracket = (bracket[0] - z0, bracket[1] - z0)
    v0 = t2s(0.0, 0.0)
    resid = abs(gauge_output(v0.L, v0.Q, v0.Qdag) - 1.0)
    if resid > _RESID_RTOL:
        raise NumericsError("balance residual exceeds tolerance")
    bp0 = BalancePoint(z_bal=0.0, residual=resid, pair=flux_pair(v0.L, v0.Q, v0.Qdag))
    sd = fundamental_eigenpair(v0.L)
    return PreparedProblem(t2=t2s, bracket=sbracket, bp0=bp0, sd=sd,
                           raw_z0=z0, gauge_factor=alpha)


def balance_at(prep: PreparedProblem, eps: float) -> BalancePoint:
    """Balance the perturbed problem at a given exciting value (shifted frame)."""
    return balance(prep.t2.at_eps(eps), 1.0, prep.bracket)
