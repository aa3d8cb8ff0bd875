"""Power-series response of a constrained source problem to a perturbation.

With the exciting variable eps switching on a perturbation dT of the
system parameters, the balancing value and the constrained fluxes become
series in eps.  Their coefficients obey recursions built from three
ingredients evaluated at the unperturbed balanced reference:

* reaction brackets pairing adjoint-side data with flux coefficients,
* harmonic solves on the complement of the fundamental mode,
* multinomial remainder terms collecting the nonlinear control
  dependence through the already-known lower-order coefficients.

Order n of the balancing value follows from annihilation of the gauge
response, the harmonic flux part from a projected solve, and the
fundamental amplitude from the gauge decomposition; the adjoint
coefficients come from running the same recursion on the transposed
problem.  Generalized bracket tables and bilinear series of those tables
serve the weighing module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constraint import BalancePoint
from .errors import NumericsError
from .families import SystemParams, SystemValue, is_linear_control
from .spectral import (
    SpectralData,
    adjoint_flux,
    flux,
    fundamental_eigenpair,
    harmonic_solve,
    project_harmonic_adjoint,
)

__all__ = [
    "ScalarSeries",
    "VectorSeries",
    "BracketTable",
    "SeriesBundle",
    "remainder_terms",
    "compose",
    "perturbation_series",
    "linear_control_series",
    "bracket_table",
    "bilinear_series",
]

DEFAULT_ORDER = 8


@dataclass
class ScalarSeries:
    """Truncated power series of a scalar quantity; coeffs[n] multiplies eps**n."""

    coeffs: np.ndarray

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, eps: float) -> float:
        return float(np.polynomial.polynomial.polyval(eps, self.coeffs))


@dataclass
class VectorSeries:
    """Truncated power series of a vector quantity; coeffs[n] is a vector."""

    coeffs: np.ndarray  # shape (order + 1, dim)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def __call__(self, eps: float) -> np.ndarray:
        out = self.coeffs[-1].copy()
        for c in self.coeffs[-2::-1]:
            out *= eps
            out += c
        return out


@lru_cache(maxsize=None)
def _proper_partitions(n: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Partitions of n with all parts strictly below n, as (part, multiplicity) lists."""

    def gen(remaining: int, max_part: int):
        if remaining == 0:
            yield ()
            return
        for part in range(min(remaining, max_part), 0, -1):
            for rest in gen(remaining - part, part):
                yield (part,) + rest

    out = []
    for parts in gen(n, n - 1):
        counts: dict[int, int] = {}
        for p in parts:
            counts[p] = counts.get(p, 0) + 1
        out.append(tuple(sorted(counts.items())))
    return tuple(out)


def _remainder(tay: list[SystemValue], zc: np.ndarray, m: int,
               skip: bool = False) -> SystemValue:
    """Multinomial remainder term of order m from Taylor data and z-coefficients.

    Index 0 is the family value itself, index 1 vanishes, and higher
    indices collect the partitions of m into lower-order pieces.
    """
    dim = tay[0].Q.shape[0]
    if m == 0:
        return tay[0]
    if m == 1 or skip:
        return SystemValue.zero(dim)
    out = SystemValue.zero(dim)
    for counts in _proper_partitions(m):
        k = sum(mult for _, mult in counts)
        coef = 1.0
        for part, mult in counts:
            coef *= zc[part] ** mult / math.factorial(mult)
        out = out + coef * tay[k]
    return out


def remainder_terms(t: SystemParams, z_series: "ScalarSeries", n: int) -> SystemValue:
    """Remainder of order n of T composed with a control series.

    z_series.coeffs[0] is the expansion point; higher coefficients feed
    the partition sum.  Linear families have vanishing remainders beyond
    order zero.
    """
    if n < 0:
        raise ValueError("order must be nonnegative")
    z0 = float(z_series.coeffs[0])
    zc = np.zeros(max(n + 1, len(z_series.coeffs)))
    zc[1:len(z_series.coeffs)] = z_series.coeffs[1:]
    tay = t.taylor_values(z0, n)
    return _remainder(tay, zc, n)


def compose(t: SystemParams, z_series: "ScalarSeries") -> list[SystemValue]:
    """Coefficients of T(z(eps)) for a control series z(eps).

    Coefficient n is z_n T' + T_n with the remainder convention above;
    coefficient 0 is the value at the expansion point z_series.coeffs[0].
    """
    n_max = z_series.order
    z0 = float(z_series.coeffs[0])
    zc = np.zeros(n_max + 1)
    zc[1:] = z_series.coeffs[1:]
    tay = t.taylor_values(z0, n_max)
    t1 = tay[1] if n_max >= 1 else None
    out = [tay[0]]
    for n in range(1, n_max + 1):
        out.append(zc[n] * t1 + _remainder(tay, zc, n))
    return out


@dataclass
class BracketTable:
    """Generalized reaction brackets <D T>_{p q} of one family value.

    Row index pairs the p-th adjoint flux coefficient, column index the
    q-th direct flux coefficient.  Entry (0, 0) is the full differential
    of the gauge output (both source slots included), row and column zero
    keep their single source slot, and interior entries couple operator
    variations only.
    """

    label: str
    table: np.ndarray

    @property
    def order(self) -> int:
        return self.table.shape[0] - 1

    def entry(self, p: int, q: int) -> float:
        if p > self.order or q > self.order:
            raise NumericsError("order exceeded")
        return float(self.table[p, q])

    def sum_0p_p0(self, p: int) -> float:
        """The combined edge entry <D T>_{0p} + <D T>_{p0}."""
        return self.entry(0, p) + self.entry(p, 0)


class _Brackets:
    """Bracket evaluations against fixed reference fluxes."""

    def __init__(self, P0: np.ndarray, Pd0: np.ndarray, Pd0_tilde: np.ndarray):
        self.P0 = P0
        self.Pd0 = Pd0
        self.Pd0t = Pd0_tilde

    def full(self, v: SystemValue) -> float:
        """<X>_{00}: differential of the gauge output along X."""
        return float(self.Pd0 @ (v.L @ self.P0 + v.Q) + v.Qdag @ self.P0)

    def edge(self, v: SystemValue, Pp: np.ndarray) -> float:
        """<X>_{0p}: adjoint-side reference against a flux coefficient."""
        return float(self.Pd0 @ (v.L @ Pp) + v.Qdag @ Pp)

    def full_tilde(self, v: SystemValue) -> float:
        """<Xtilde>_{00}: operator and direct-source slots projected."""
        return float(self.Pd0t @ (v.L @ self.P0 + v.Q) + v.Qdag @ self.P0)

    def edge_tilde(self, v: SystemValue, Pp: np.ndarray) -> float:
        return float(self.Pd0t @ (v.L @ Pp) + v.Qdag @ Pp)


@dataclass
class SeriesBundle:
    """Series coefficients of the constrained response and their context."""

    z: ScalarSeries                  # coefficient 0 is the reference balancing value
    flux: VectorSeries               # coefficient 0 is the constrained flux
    adjoint: VectorSeries
    brackets: dict[str, BracketTable] = field(default_factory=dict)
    sd: SpectralData | None = None
    t: SystemParams | None = None
    dt: SystemParams | None = None
    z_adjoint_gap: float = 0.0       # agreement of the transposed-recursion z-series

    @property
    def order(self) -> int:
        return self.z.order

    def z_increments(self) -> np.ndarray:
        out = self.z.coeffs.copy()
        out[0] = 0.0
        return out

    def radius_estimate(self) -> float:
        """Ratio-test estimate of the convergence radius of the z-series.

        Reported for diagnostics only; nothing downstream enforces it.
        """
        zc = np.abs(self.z_increments())
        ratios = [zc[n - 1] / zc[n] for n in range(2, len(zc)) if zc[n] > 0 and zc[n - 1] > 0]
        if not ratios:
            return np.inf
        return float(np.median(ratios[-3:]))


def _one_sided(t: SystemParams, dt: SystemParams, z0: float, order: int,
               sd: SpectralData, P0: np.ndarray, Pd0: np.ndarray,
               skip_remainders: bool) -> tuple[np.ndarray, np.ndarray]:
    """z- and flux-coefficients of one orientation of the problem."""
    dim = t.dim
    kmax_t = 1 if skip_remainders else max(order, 1)
    kmax_dt = 1 if skip_remainders else max(order - 1, 1)
    t_tay = t.taylor_values(z0, kmax_t)
    dt_tay = dt.taylor_values(z0, kmax_dt)
    v0 = t_tay[0]
    T1 = t_tay[1]
    dT1 = dt_tay[1]

    bra = _Brackets(P0, Pd0, project_harmonic_adjoint(Pd0, sd))
    wT1 = bra.full(T1)
    w_scale = (np.linalg.norm(Pd0) * (np.linalg.norm(T1.L) * np.linalg.norm(P0)
                                      + np.linalg.norm(T1.Q))
               + np.linalg.norm(T1.Qdag) * np.linalg.norm(P0))
    if abs(wT1) <= 1e-12 * max(w_scale, 1e-300):
        raise NumericsError("zero differential weight")

    # Two equivalent routes to the fundamental amplitude: the constraint
    # equation divides by the source-mode coupling and stays stable as the
    # fundamental value approaches zero; the mode projection of the field
    # equation divides by the fundamental value and covers sources that
    # decouple from the mode.  Pick the healthier divisor.
    qphi = float(v0.Qdag @ sd.phi)
    coupling_health = abs(qphi) / max(np.linalg.norm(v0.Qdag), 1e-300)
    sigma_health = abs(sd.sigma) / max(np.linalg.norm(v0.L), 1e-300)
    use_constraint = coupling_health >= sigma_health
    if max(coupling_health, sigma_health) <= 1e-13:
        raise NumericsError("zero fundamental source coupling")

    zc = np.zeros(order + 1)
    P = np.zeros((order + 1, dim))
    P[0] = P0
    X: list[SystemValue | None] = [None] * (order + 1)
    for n in range(1, order + 1):
        base = (_remainder(t_tay, zc, n, skip_remainders)
                + _remainder(dt_tay, zc, n - 1, skip_remainders))
        known = zc[n - 1] * bra.full(dT1) + bra.full(base)
        for p in range(1, n):
            known += bra.edge(X[n - p], P[p])
        zc[n] = -known / wT1
        xn = zc[n] * T1 + zc[n - 1] * dT1 + base
        X[n] = xn

        rhs_vec = xn.L @ P0 + xn.Q
        for p in range(1, n):
            rhs_vec = rhs_vec + X[n - p].L @ P[p]
        p_harm = harmonic_solve(v0.L, sd, -rhs_vec)

        if use_constraint:
            rhs_amp = bra.full_tilde(xn)
            for p in range(1, n):
                rhs_amp += bra.edge_tilde(X[n - p], P[p])
            amp = -rhs_amp / qphi
        else:
            amp = -float(sd.phi_dag @ rhs_vec) / sd.sigma
        P[n] = amp * sd.phi + p_harm
    return zc, P


def perturbation_series(t: SystemParams, dt: SystemParams, bp: BalancePoint,
                        order: int = DEFAULT_ORDER, *,
                        skip_remainders: bool = False) -> SeriesBundle:
    """Series of the balancing value and both constrained fluxes.

    pre: bp balances T (unperturbed) and the reference operator admits a
    separated fundamental mode.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    z0 = bp.z_bal
    v0 = t(z0)
    sd = fundamental_eigenpair(v0.L)
    P0 = flux(v0.L, v0.Q)
    Pd0 = adjoint_flux(v0.L, v0.Qdag)

    zc, P = _one_sided(t, dt, z0, order, sd, P0, Pd0, skip_remainders)
    sd_adj = SpectralData(sigma=sd.sigma, phi=sd.phi_dag, phi_dag=sd.phi, gap=sd.gap)
    zc_adj, Pa = _one_sided(t.adjoint(), dt.adjoint(), z0, order, sd_adj, Pd0, P0,
                            skip_remainders)

    z_coeffs = zc.copy()
    z_coeffs[0] = z0
    bundle = SeriesBundle(
        z=ScalarSeries(z_coeffs),
        flux=VectorSeries(P),
        adjoint=VectorSeries(Pa),
        sd=sd, t=t, dt=dt,
        z_adjoint_gap=float(np.max(np.abs(zc - zc_adj))),
    )
    bundle.brackets["prime"] = bracket_table("prime", bundle)
    bundle.brackets["delta"] = bracket_table("delta", bundle)
    return bundle


def linear_control_series(t: SystemParams, dt: SystemParams, bp: BalancePoint,
                          order: int = DEFAULT_ORDER) -> SeriesBundle:
    """Specialized recursion for control-linear families (no remainder terms)."""
    if not (is_linear_control(t) and is_linear_control(dt)):
        raise NumericsError("control not linear")
    return perturbation_series(t, dt, bp, order, skip_remainders=True)


def bracket_table(label: str, bundle: SeriesBundle,
                  value: SystemValue | None = None) -> BracketTable:
    """Generalized bracket entries of a family value against the bundle fluxes.

    label selects the standard families: "prime" is the control
    derivative T', "delta" the perturbation dT, both evaluated at the
    reference; an explicit value overrides the label.
    """
    z0 = float(bundle.z.coeffs[0])
    if value is None:
        if label == "prime":
            value = bundle.t.derivative()(z0)
        elif label == "delta":
            value = bundle.dt(z0)
        else:
            raise ValueError(f"unknown bracket label: {label!r}")
    P = bundle.flux.coeffs
    Pa = bundle.adjoint.coeffs
    n1 = P.shape[0]
    tab = np.empty((n1, n1))
    lp = P @ value.L.T
    tab[:, :] = Pa @ lp.T
    tab[:, 0] += Pa @ value.Q
    tab[0, :] += P @ value.Qdag
    return BracketTable(label=label, table=tab)


def bilinear_series(label: str, bundle: SeriesBundle, order: int | None = None,
                    d_t: SystemParams | None = None,
                    d_dt: SystemParams | None = None) -> ScalarSeries:
    """Series coefficients <D T>_n of a bracket along the constrained path.

    label "prime" takes D = d/dz (so DT = T', DdT = dT'), label "delta"
    takes D = the perturbation switch (DT = dT, DdT = 0); explicit
    families override.  Coefficient n sums generalized bracket entries of
    the composed family coefficients against flux coefficients with
    p1 + p2 + m = n.
    """
    if order is None:
        order = bundle.order
    if order > bundle.order:
        raise NumericsError("order exceeded")
    t, dt = bundle.t, bundle.dt
    if d_t is None:
        if label == "prime":
            d_t, d_dt = t.derivative(), dt.derivative()
        elif label == "delta":
            d_t, d_dt = dt, SystemParams.zero(dt.dim)
        else:
            raise ValueError(f"unknown bracket label: {label!r}")
    if d_dt is None:
        d_dt = SystemParams.zero(d_t.dim)

    z0 = float(bundle.z.coeffs[0])
    zc = bundle.z_increments()
    dt_tay = d_t.taylor_values(z0, max(order, 1))
    ddt_tay = d_dt.taylor_values(z0, max(order - 1, 1))
    dt1 = dt_tay[1]
    ddt1 = ddt_tay[1]

    # coefficient m of the composed family D T(z(eps)) + eps * D dT(z(eps))
    y: list[SystemValue] = []
    for m in range(order + 1):
        if m == 0:
            y.append(dt_tay[0])
            continue
        ym = zc[m] * dt1 + _remainder(dt_tay, zc, m) + _remainder(ddt_tay, zc, m - 1)
        if m >= 2:
            ym = ym + zc[m - 1] * ddt1
        y.append(ym)

    tables = [bracket_table(label, bundle, value=ym).table for ym in y]
    coeffs = np.zeros(order + 1)
    for n in range(order + 1):
        s = 0.0
        for m in range(n + 1):
            tab = tables[m]
            for p1 in range(n - m + 1):
                s += tab[p1, n - m - p1]
        coeffs[n] = s
    return ScalarSeries(coeffs)
