"""Polynomial operator families and the system-parameter model.

A source problem is specified by a triple T = (L, Q, Qdag): a square
operator L, a source vector Q and an adjoint source (gauge) vector Qdag,
all depending polynomially on a scalar control variable z.  Exact
coefficient lists keep differentiation and recentering closed operations,
so the perturbation machinery never needs numerical differentiation of
the model itself.

A perturbed problem adds a second scalar, the exciting variable eps, with
fixed degree one: T2(eps, z) = T(z) + eps * dT(z).  The two variables can
be exchanged, turning the control into the exciting variable and back.

Conventions
-----------
* coefficient k of a family multiplies z**k;
* trailing all-zero coefficients are trimmed on construction, so the
  stored degree is well-defined (a zero family keeps one zero block);
* the inner product is the real Euclidean dot product and adjoints are
  plain transposes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericsError, SchemaError

__all__ = [
    "PolyMatrix",
    "PolyVector",
    "SystemParams",
    "SystemValue",
    "CombinedFamily",
    "GaugeReference",
    "Problem",
    "is_linear_control",
    "is_remote",
    "load_problem",
    "save_problem",
]


def _trim(coeffs: np.ndarray) -> np.ndarray:
    # keep at least the constant coefficient so a zero family has degree 0
    k = coeffs.shape[0]
    while k > 1 and not np.any(coeffs[k - 1]):
        k -= 1
    return np.ascontiguousarray(coeffs[:k])


def _horner(coeffs: np.ndarray, z: float) -> np.ndarray:
    out = coeffs[-1].copy()
    for c in coeffs[-2::-1]:
        out *= z
        out += c
    return out


def _derivative(coeffs: np.ndarray) -> np.ndarray:
    if coeffs.shape[0] == 1:
        return np.zeros_like(coeffs[:1])
    k = np.arange(1, coeffs.shape[0], dtype=float)
    return coeffs[1:] * k.reshape((-1,) + (1,) * (coeffs.ndim - 1))


def _recenter(coeffs: np.ndarray, z0: float) -> np.ndarray:
    """Coefficients of f(z0 + z) from coefficients of f(z)."""
    deg = coeffs.shape[0] - 1
    out = np.zeros_like(coeffs)
    for j in range(deg + 1):
        acc = np.zeros_like(coeffs[0])
        for k in range(j, deg + 1):
            acc += math.comb(k, j) * z0 ** (k - j) * coeffs[k]
        out[j] = acc
    return out


@dataclass(eq=False)
class PolyMatrix:
    """Square-matrix polynomial family of one scalar variable."""

    coeffs: np.ndarray  # shape (degree + 1, dim, dim)

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ValueError("PolyMatrix coefficients must be (k, dim, dim)")
        self.coeffs = _trim(c)

    @classmethod
    def zero(cls, dim: int) -> "PolyMatrix":
        return cls(np.zeros((1, dim, dim)))

    @classmethod
    def constant(cls, mat: np.ndarray) -> "PolyMatrix":
        return cls(np.asarray(mat, dtype=float)[None, :, :])

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, z: float) -> np.ndarray:
        return _horner(self.coeffs, z)

    def derivative(self) -> "PolyMatrix":
        return PolyMatrix(_derivative(self.coeffs))

    def recenter(self, z0: float) -> "PolyMatrix":
        return PolyMatrix(_recenter(self.coeffs, z0))

    def transpose(self) -> "PolyMatrix":
        return PolyMatrix(self.coeffs.transpose(0, 2, 1))

    def scaled(self, alpha: float) -> "PolyMatrix":
        return PolyMatrix(self.coeffs * alpha)


@dataclass(eq=False)
class PolyVector:
    """Vector polynomial family of one scalar variable."""

    coeffs: np.ndarray  # shape (degree + 1, dim)

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2:
            raise ValueError("PolyVector coefficients must be (k, dim)")
        self.coeffs = _trim(c)

    @classmethod
    def zero(cls, dim: int) -> "PolyVector":
        return cls(np.zeros((1, dim)))

    @classmethod
    def constant(cls, vec: np.ndarray) -> "PolyVector":
        return cls(np.asarray(vec, dtype=float)[None, :])

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, z: float) -> np.ndarray:
        return _horner(self.coeffs, z)

    def derivative(self) -> "PolyVector":
        return PolyVector(_derivative(self.coeffs))

    def recenter(self, z0: float) -> "PolyVector":
        return PolyVector(_recenter(self.coeffs, z0))

    def scaled(self, alpha: float) -> "PolyVector":
        return PolyVector(self.coeffs * alpha)


@dataclass
class SystemValue:
    """The triple (L, Q, Qdag) evaluated at a point."""

    L: np.ndarray
    Q: np.ndarray
    Qdag: np.ndarray

    def __add__(self, other: "SystemValue") -> "SystemValue":
        return SystemValue(self.L + other.L, self.Q + other.Q, self.Qdag + other.Qdag)

    def __mul__(self, a: float) -> "SystemValue":
        return SystemValue(a * self.L, a * self.Q, a * self.Qdag)

    __rmul__ = __mul__

    @classmethod
    def zero(cls, dim: int) -> "SystemValue":
        return cls(np.zeros((dim, dim)), np.zeros(dim), np.zeros(dim))


@dataclass(eq=False)
class SystemParams:
    """System parameters T = (L, Q, Qdag) as polynomial families of z."""

    L: PolyMatrix
    Q: PolyVector
    Qdag: PolyVector

    def __post_init__(self) -> None:
        if not (self.L.dim == self.Q.dim == self.Qdag.dim):
            raise ValueError("system parameter dimensions disagree")

    @property
    def dim(self) -> int:
        return self.L.dim

    def __call__(self, z: float) -> SystemValue:
        return SystemValue(self.L(z), self.Q(z), self.Qdag(z))

    def derivative(self) -> "SystemParams":
        return SystemParams(self.L.derivative(), self.Q.derivative(), self.Qdag.derivative())

    def taylor_values(self, z0: float, kmax: int) -> list[SystemValue]:
        """Values of T and its first kmax z-derivatives at z0 (not divided by k!)."""
        out = []
        cur = self
        for _ in range(kmax + 1):
            out.append(cur(z0))
            cur = cur.derivative()
        return out

    def recenter(self, z0: float) -> "SystemParams":
        return SystemParams(self.L.recenter(z0), self.Q.recenter(z0), self.Qdag.recenter(z0))

    def adjoint(self) -> "SystemParams":
        """The transposed problem: sources and gauge swap roles."""
        return SystemParams(self.L.transpose(), self.Qdag, self.Q)

    def scaled_gauge(self, alpha: float) -> "SystemParams":
        return SystemParams(self.L, self.Q, self.Qdag.scaled(alpha))

    def is_zero(self) -> bool:
        return self.L.is_zero() and self.Q.is_zero() and self.Qdag.is_zero()

    @classmethod
    def zero(cls, dim: int) -> "SystemParams":
        return cls(PolyMatrix.zero(dim), PolyVector.zero(dim), PolyVector.zero(dim))


def is_linear_control(t: SystemParams) -> bool:
    """True iff every component of T is at most degree one in the control."""
    return t.derivative().derivative().is_zero()


def is_remote(dt: SystemParams) -> bool:
    """True iff the perturbation does not depend on the control variable."""
    return dt.derivative().is_zero()


@dataclass(eq=False)
class CombinedFamily:
    """Perturbed family T2(eps, z) = base(z) + eps * pert(z).

    The exciting variable eps enters with fixed degree one; the control
    variable z enters polynomially through both members.
    """

    base: SystemParams
    pert: SystemParams

    def __post_init__(self) -> None:
        if self.base.dim != self.pert.dim:
            raise ValueError("base and perturbation dimensions disagree")

    @property
    def dim(self) -> int:
        return self.base.dim

    def __call__(self, eps: float, z: float) -> SystemValue:
        return self.base(z) + eps * self.pert(z)

    def at_eps(self, eps: float) -> SystemParams:
        """Freeze the exciting variable, leaving a family of z alone."""
        return SystemParams(
            _poly_add(self.base.L, self.pert.L, eps),
            _poly_add(self.base.Q, self.pert.Q, eps),
            _poly_add(self.base.Qdag, self.pert.Qdag, eps),
        )

    def recenter(self, z0: float) -> "CombinedFamily":
        return CombinedFamily(self.base.recenter(z0), self.pert.recenter(z0))

    def adjoint(self) -> "CombinedFamily":
        return CombinedFamily(self.base.adjoint(), self.pert.adjoint())

    def scaled_gauge(self, alpha: float) -> "CombinedFamily":
        return CombinedFamily(self.base.scaled_gauge(alpha), self.pert.scaled_gauge(alpha))

    def exchange(self) -> "CombinedFamily":
        """Swap exciting and control variables: (E T2)(eps, z) = T2(z, eps).

        Representable only when the control dependence has degree at most
        one, since the swapped control becomes the new exciting variable.
        """
        deg = max(
            self.base.L.degree, self.base.Q.degree, self.base.Qdag.degree,
            self.pert.L.degree, self.pert.Q.degree, self.pert.Qdag.degree,
        )
        if deg > 1:
            raise NumericsError("exchange requires degree-1 control dependence")
        new_base = SystemParams(
            _stack_linear(_coef(self.base.L, 0), _coef(self.pert.L, 0)),
            _stack_linear_vec(_vcoef(self.base.Q, 0), _vcoef(self.pert.Q, 0)),
            _stack_linear_vec(_vcoef(self.base.Qdag, 0), _vcoef(self.pert.Qdag, 0)),
        )
        new_pert = SystemParams(
            _stack_linear(_coef(self.base.L, 1), _coef(self.pert.L, 1)),
            _stack_linear_vec(_vcoef(self.base.Q, 1), _vcoef(self.pert.Q, 1)),
            _stack_linear_vec(_vcoef(self.base.Qdag, 1), _vcoef(self.pert.Qdag, 1)),
        )
        return CombinedFamily(new_base, new_pert)


def _poly_add(a, b, scale: float):
    ka, kb = a.coeffs.shape[0], b.coeffs.shape[0]
    k = max(ka, kb)
    out = np.zeros((k,) + a.coeffs.shape[1:])
    out[:ka] = a.coeffs
    out[:kb] += scale * b.coeffs
    return type(a)(out)


def _coef(m: PolyMatrix, k: int) -> np.ndarray:
    if k <= m.degree:
        return m.coeffs[k]
    return np.zeros((m.dim, m.dim))


def _vcoef(v: PolyVector, k: int) -> np.ndarray:
    if k <= v.degree:
        return v.coeffs[k]
    return np.zeros(v.dim)


def _stack_linear(c0: np.ndarray, c1: np.ndarray) -> PolyMatrix:
    return PolyMatrix(np.stack([c0, c1]))


def _stack_linear_vec(c0: np.ndarray, c1: np.ndarray) -> PolyVector:
    return PolyVector(np.stack([c0, c1]))


@dataclass(frozen=True)
class GaugeReference:
    """Required gauge output R0 defining the constraint R(T(z)) = R0."""

    R0: float = 1.0

    def __post_init__(self) -> None:
        if self.R0 == 0.0 or not np.isfinite(self.R0):
            raise ValueError("zero gauge factor")


@dataclass(eq=False)
class Problem:
    """A problem file: perturbed family, gauge reference and control bracket."""

    t2: CombinedFamily
    gauge: GaugeReference
    bracket: tuple[float, float]
    name: str = ""
    meta: dict = field(default_factory=dict)


def _as_matrix_coeffs(raw, dim: int, key: str) -> PolyMatrix:
    """A dim x dim matrix (constant) or a list of them (control coefficients)."""
    try:
        arr = np.asarray(raw, dtype=float)
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"field '{key}' must be numeric: {exc}") from exc
    if arr.ndim == 2 and arr.shape == (dim, dim):
        return PolyMatrix(arr[None, :, :])
    if arr.ndim == 3 and arr.shape[1:] == (dim, dim) and arr.shape[0] >= 1:
        return PolyMatrix(arr)
    raise SchemaError(f"field '{key}' must be a {dim}x{dim} matrix "
                      f"or a list of them, got shape {arr.shape}")


def _as_vector_coeffs(raw, dim: int, key: str) -> PolyVector:
    """A length-dim vector (constant) or a list of them (control coefficients)."""
    try:
        arr = np.asarray(raw, dtype=float)
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"field '{key}' must be numeric: {exc}") from exc
    if arr.ndim == 1 and arr.shape == (dim,):
        return PolyVector(arr[None, :])
    if arr.ndim == 2 and arr.shape[1] == dim and arr.shape[0] >= 1:
        return PolyVector(arr)
    raise SchemaError(f"field '{key}' must be a length-{dim} vector "
                      f"or a list of them, got shape {arr.shape}")


def load_problem(source) -> Problem:
    """Load a problem from a JSON file path or an already-parsed dict.

    Required fields: dim, L, Q, Qdag, bracket.  Optional: dL, dQ, dQdag
    (default zero perturbation), R0 (default 1.0), name.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise SchemaError(f"problem file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"problem file is not valid JSON: {path}") from exc
        name = data.get("name", path.stem)
    elif isinstance(source, dict):
        data = source
        name = data.get("name", "")
    else:
        raise SchemaError("problem source must be a path or a dict")

    if "dim" not in data:
        raise SchemaError("missing field 'dim'")
    dim = data["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise SchemaError("field 'dim' must be a positive integer")
    for key in ("L", "Q", "Qdag", "bracket"):
        if key not in data:
            raise SchemaError(f"missing field '{key}'")

    L = _as_matrix_coeffs(data["L"], dim, "L")
    Q = _as_vector_coeffs(data["Q"], dim, "Q")
    Qdag = _as_vector_coeffs(data["Qdag"], dim, "Qdag")
    dL = _as_matrix_coeffs(data["dL"], dim, "dL") if "dL" in data else PolyMatrix.zero(dim)
    dQ = _as_vector_coeffs(data["dQ"], dim, "dQ") if "dQ" in data else PolyVector.zero(dim)
    dQdag = _as_vector_coeffs(data["dQdag"], dim, "dQdag") if "dQdag" in data else PolyVector.zero(dim)

    bracket = data["bracket"]
    if (not isinstance(bracket, list)) or len(bracket) != 2:
        raise SchemaError("field 'bracket' must be [z_lo, z_hi]")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise SchemaError("field 'bracket' must satisfy z_lo < z_hi")

    r0 = data.get("R0", 1.0)
    try:
        gauge = GaugeReference(float(r0))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid R0: {exc}") from exc

    t2 = CombinedFamily(SystemParams(L, Q, Qdag), SystemParams(dL, dQ, dQdag))
    return Problem(t2=t2, gauge=gauge, bracket=(lo, hi), name=name)


def save_problem(problem: Problem, path) -> None:
    data = {
        "dim": problem.t2.dim,
        "L": [c.tolist() for c in problem.t2.base.L.coeffs],
        "Q": [c.tolist() for c in problem.t2.base.Q.coeffs],
        "Qdag": [c.tolist() for c in problem.t2.base.Qdag.coeffs],
        "dL": [c.tolist() for c in problem.t2.pert.L.coeffs],
        "dQ": [c.tolist() for c in problem.t2.pert.Q.coeffs],
        "dQdag": [c.tolist() for c in problem.t2.pert.Qdag.coeffs],
        "R0": problem.gauge.R0,
        "bracket": list(problem.bracket),
    }
    if problem.name:
        data["name"] = problem.name
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
