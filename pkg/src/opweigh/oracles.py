"""Closed-form reference solutions and a brute-force fitting oracle.

Two analytically solvable families provide end-to-end cross-checks for
the whole pipeline, and a brute-force oracle fits constrained solves on
an exciting-variable grid so series coefficients can be checked against
plain polynomial fits with no shared code path.

The two-by-two algebra uses the comatrix (adjugate) Abar with
Abar A = det(A) I, and the bilinear codeterminant A * B defined by mixing
rows of the two matrices; det(A + B) = det A + A * B + det B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraint import balance
from .errors import NumericsError
from .families import CombinedFamily, GaugeReference, PolyMatrix, PolyVector, SystemParams
from .spectral import adjoint_flux, flux

__all__ = [
    "comatrix",
    "codeterminant",
    "OneDOracle",
    "TwoDConstants",
    "TwoDOracle",
    "oneD_oracle",
    "twoD_oracle",
    "oneD_problem",
    "twoD_problem",
    "worked_twoD_problem",
    "brute_force_oracle",
    "BruteForceFit",
]

# the fixed reference operator of the two-dimensional closed-form family
A_FIXED = np.array([[0.0, 0.0], [0.0, -1.0]])


def comatrix(a: np.ndarray) -> np.ndarray:
    """Adjugate of a 2x2 matrix: comatrix(A) @ A = det(A) I."""
    a = np.asarray(a, dtype=float)
    if a.shape != (2, 2):
        raise NumericsError("dimension must be 2")
    return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]])


def codeterminant(a: np.ndarray, b: np.ndarray) -> float:
    """Bilinear form pairing rows of two 2x2 matrices.

    det(A + B) = det A + codeterminant(A, B) + det B, and
    codeterminant(A, A) = 2 det A.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise NumericsError("dimension must be 2")
    return float((a[0, 0] * b[1, 1] - a[0, 1] * b[1, 0])
                 + (b[0, 0] * a[1, 1] - b[0, 1] * a[1, 0]))


@dataclass
class OneDOracle:
    """Closed forms for the scalar family L2 = z B + eps C (shifted variable)."""

    z_bal: float
    flux: float
    adjoint: float
    Z1: float
    dZ2: float

    @staticmethod
    def R(B: float, C: float, Q: float, Qdag: float, eps: float, z: float) -> float:
        return Qdag * Q / (Qdag * Q - z * B - eps * C)


def oneD_oracle(B: float, C: float, Q: float, Qdag: float, eps: float) -> OneDOracle:
    """Constrained closed forms of the one-dimensional family at R0 = 1.

    The variable is already shifted so the unperturbed balancing value is
    zero; the constrained flux and adjoint flux are independent of eps.
    """
    if B == 0.0 or Qdag * Q == 0.0:
        raise NumericsError("degenerate 1D instance")
    z_bal = -C * eps / B
    z1 = C * eps / (Qdag * Q)
    return OneDOracle(z_bal=z_bal, flux=1.0 / Qdag, adjoint=1.0 / Q,
                      Z1=z1, dZ2=B * z_bal / (Qdag * Q))


@dataclass
class TwoDConstants:
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    dT0: float


@dataclass
class TwoDOracle:
    """Closed forms of the two-dimensional comatrix family at R0 = 1."""

    constants: TwoDConstants
    z_bal: float                 # shifted balancing value at the requested eps
    flux0: np.ndarray            # constrained flux series coefficients ...
    flux1: np.ndarray
    adjoint0: np.ndarray
    adjoint1: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    Qdag: np.ndarray

    def R(self, eps: float, z: float) -> float:
        """Gauge output in the shifted control variable."""
        c = self.constants
        Bb, Cb = comatrix(self.B), comatrix(self.C)
        qbq = float(self.Qdag @ Bb @ self.Q)
        qcq = float(self.Qdag @ Cb @ self.Q)
        b11, c11 = self.B[0, 0], self.C[0, 0]
        qq = self.Qdag[0] * self.Q[0]
        num = qbq * z + qcq * eps + c.alpha1 * qbq - qq
        den = b11 * z + c11 * eps + b11 * c.alpha1
        return num / den

    def flux_coeff(self, p: int) -> np.ndarray:
        if p == 0:
            return self.flux0
        return self.constants.alpha4 ** (p - 1) * self.flux1

    def adjoint_coeff(self, p: int) -> np.ndarray:
        if p == 0:
            return self.adjoint0
        return self.constants.alpha4 ** (p - 1) * self.adjoint1

    def weight_coeff(self, n: int) -> float:
        """Exciting-variable weight series <dT>_n (geometric with ratio alpha4)."""
        c = self.constants
        cross = float(self.adjoint0 @ self.C @ self.flux_coeff(1)
                      + self.adjoint_coeff(1) @ self.C @ self.flux0)
        diag = float(self.adjoint_coeff(1) @ self.C @ self.flux_coeff(1))
        if n == 0:
            return c.dT0
        return c.alpha4 ** (n - 1) * cross + (n - 1) * c.alpha4 ** (n - 2) * diag

    def Z1(self, eps: float, nmax: int = 200) -> float:
        return float(sum(self.weight_coeff(n) * eps ** (n + 1) / (n + 1)
                         for n in range(nmax + 1)))


def twoD_oracle(B: np.ndarray, C: np.ndarray, Q: np.ndarray, Qdag: np.ndarray,
                eps: float = 0.0) -> TwoDOracle:
    """Closed-form constrained solution of L2 = A + z' B + eps C at R0 = 1.

    pre: det B = det C = codeterminant(B, C) = 0 within 1e-12 and the
    first entry of B is nonzero; the reported control values are in the
    shifted variable z = z' - alpha1.
    """
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    Q = np.asarray(Q, dtype=float)
    Qdag = np.asarray(Qdag, dtype=float)
    if B.shape != (2, 2) or C.shape != (2, 2) or Q.shape != (2,) or Qdag.shape != (2,):
        raise NumericsError("dimension must be 2")
    scale = max(np.abs(B).max(), np.abs(C).max(), 1e-300) ** 2
    if abs(np.linalg.det(B)) > 1e-12 * scale or abs(np.linalg.det(C)) > 1e-12 * scale \
            or abs(codeterminant(B, C)) > 1e-12 * scale:
        raise NumericsError("degenerate 2D instance")
    b11, c11 = B[0, 0], C[0, 0]
    qq = Qdag[0] * Q[0]
    if b11 == 0.0 or qq == 0.0:
        raise NumericsError("degenerate 2D instance")
    Bb, Cb = comatrix(B), comatrix(C)
    qbq = float(Qdag @ Bb @ Q)
    qcq = float(Qdag @ Cb @ Q)
    if qbq == b11:
        raise NumericsError("degenerate 2D instance")
    a1 = qq / (qbq - b11)
    a2 = -(qcq - c11) / (qbq - b11)
    a3 = 1.0 / (b11 * a1)
    a4 = (b11 * qcq - c11 * qbq) / (b11 * qq)
    dT0 = (qbq - b11) * (qcq - c11) / (qq * b11)
    consts = TwoDConstants(alpha1=a1, alpha2=a2, alpha3=a3, alpha4=a4, dT0=dT0)

    Ab = comatrix(A_FIXED)
    flux0 = a3 * (Ab + a1 * Bb) @ Q
    flux1 = a3 * (a4 * Ab - (c11 / b11) * Bb + Cb) @ Q
    adjoint0 = a3 * (Ab.T + a1 * Bb.T) @ Qdag
    adjoint1 = a3 * (a4 * Ab.T - (c11 / b11) * Bb.T + Cb.T) @ Qdag

    return TwoDOracle(constants=consts, z_bal=a2 * eps,
                      flux0=flux0, flux1=flux1,
                      adjoint0=adjoint0, adjoint1=adjoint1,
                      B=B, C=C, Q=Q, Qdag=Qdag)


def oneD_problem(B: float, C: float, Q: float,
                 Qdag: float) -> tuple[CombinedFamily, GaugeReference]:
    """The one-dimensional family in the raw (unshifted) control variable."""
    base = SystemParams(
        PolyMatrix(np.array([[[0.0]], [[B]]])),
        PolyVector(np.array([[Q]])),
        PolyVector(np.array([[Qdag]])),
    )
    pert = SystemParams(
        PolyMatrix.constant(np.array([[C]])),
        PolyVector.zero(1),
        PolyVector.zero(1),
    )
    return CombinedFamily(base, pert), GaugeReference(1.0)


def twoD_problem(B: np.ndarray, C: np.ndarray, Q: np.ndarray,
                 Qdag: np.ndarray) -> tuple[CombinedFamily, GaugeReference]:
    """The two-dimensional family in the raw (unshifted) control variable."""
    base = SystemParams(
        PolyMatrix(np.stack([A_FIXED, np.asarray(B, dtype=float)])),
        PolyVector.constant(Q),
        PolyVector.constant(Qdag),
    )
    pert = SystemParams(
        PolyMatrix.constant(C),
        PolyVector.zero(2),
        PolyVector.zero(2),
    )
    return CombinedFamily(base, pert), GaugeReference(1.0)


# the worked two-dimensional instance used across the test corpus
WORKED_B = np.array([[1.0, 1.0], [0.0, 0.0]])
WORKED_C = np.array([[0.0, 0.0], [1.0, 1.0]])
WORKED_Q = np.array([1.0, 0.0])
WORKED_QDAG = np.array([2.0, 1.0])
WORKED_BRACKET = (-4.0, -0.5)


def worked_twoD_problem() -> tuple[CombinedFamily, GaugeReference, tuple[float, float]]:
    t2, gauge = twoD_problem(WORKED_B, WORKED_C, WORKED_Q, WORKED_QDAG)
    return t2, gauge, WORKED_BRACKET


@dataclass
class BruteForceFit:
    """Polynomial fits of constrained solves over an exciting-variable grid."""

    eps_grid: np.ndarray
    z_coeffs: np.ndarray          # fitted series of the balancing value
    flux_coeffs: np.ndarray       # shape (degree + 1, dim)
    adjoint_coeffs: np.ndarray    # shape (degree + 1, dim)
    residual: float               # worst normalized fit residual


def _fit(eps: np.ndarray, vals: np.ndarray, degree: int) -> tuple[np.ndarray, float]:
    series = np.polynomial.Polynomial.fit(eps, vals, degree)
    coef = series.convert().coef
    out = np.zeros(degree + 1)
    out[: len(coef)] = coef
    resid = np.max(np.abs(series(eps) - vals))
    scale = max(np.max(np.abs(vals)), 1.0)
    return out, resid / scale


def brute_force_oracle(t2: CombinedFamily, gauge: GaugeReference | float,
                       bracket: tuple[float, float], eps_grid=None,
                       fit_degree: int = 7) -> BruteForceFit:
    """Constrained solves on a grid, fitted by plain polynomials in eps.

    Independent of the recursion machinery: each grid point is balanced
    directly and the fluxes are evaluated at that balancing value.  The
    control values are reported in the shifted variable (zero reference).
    """
    if eps_grid is None:
        eps_grid = np.linspace(-0.25, 0.25, fit_degree + 2)
    eps_grid = np.asarray(eps_grid, dtype=float)
    if len(eps_grid) < fit_degree + 1:
        raise NumericsError("insufficient samples")

    z0 = balance(t2.at_eps(0.0), gauge, bracket).z_bal
    zs, fluxes, adjoints = [], [], []
    for e in eps_grid:
        bp = balance(t2.at_eps(float(e)), gauge, bracket)
        v = t2(float(e), bp.z_bal)
        zs.append(bp.z_bal - z0)
        fluxes.append(flux(v.L, v.Q))
        adjoints.append(adjoint_flux(v.L, v.Qdag))
    zs = np.asarray(zs)
    fluxes = np.asarray(fluxes)
    adjoints = np.asarray(adjoints)

    z_coeffs, worst = _fit(eps_grid, zs, fit_degree)
    dim = t2.dim
    flux_coeffs = np.zeros((fit_degree + 1, dim))
    adjoint_coeffs = np.zeros((fit_degree + 1, dim))
    for j in range(dim):
        flux_coeffs[:, j], r1 = _fit(eps_grid, fluxes[:, j], fit_degree)
        adjoint_coeffs[:, j], r2 = _fit(eps_grid, adjoints[:, j], fit_degree)
        worst = max(worst, r1, r2)
    if worst > 1e-8:
        raise NumericsError("fit residual too large")
    return BruteForceFit(eps_grid=eps_grid, z_coeffs=z_coeffs,
                         flux_coeffs=flux_coeffs, adjoint_coeffs=adjoint_coeffs,
                         residual=worst)
