"""Shared builders for randomized test instances."""

import numpy as np
import pytest

from opweigh.families import (
    CombinedFamily,
    GaugeReference,
    PolyMatrix,
    PolyVector,
    SystemParams,
)
from opweigh.spectral import flux


def separated_operator(rng: np.random.Generator, dim: int,
                       fundamental_scale: tuple[float, float] = (0.4, 0.7),
                       rest_scale: tuple[float, float] = (1.0, 3.0)) -> np.ndarray:
    """A real matrix with a simple smallest eigenvalue away from the rest.

    Built from a prescribed spectrum through a mild similarity transform,
    so eigenvalues are known and the conditioning stays moderate.
    """
    S = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
    lam = np.empty(dim)
    lam[0] = rng.choice([-1.0, 1.0]) * rng.uniform(*fundamental_scale)
    lam[1:] = rng.choice([-1.0, 1.0], dim - 1) * rng.uniform(*rest_scale, dim - 1)
    return S @ np.diag(lam) @ np.linalg.inv(S)


def random_instance(seed: int, dim: int, *, cubic: bool = True,
                    pert_scale: float = 0.2,
                    excite_sources: bool = True,
                    remote: bool = False) -> tuple[CombinedFamily, GaugeReference] | None:
    """A random constrained problem balanced at control zero, or None if degenerate.

    The base operator family is cubic in the control (linear when cubic
    is False) and the gauge reference is the value at control zero, so
    the unperturbed balance sits at the origin by construction.  A remote
    perturbation has no control dependence of its own.
    """
    rng = np.random.default_rng(seed)
    L0 = separated_operator(rng, dim)
    L1 = 0.25 * rng.standard_normal((dim, dim))
    if cubic:
        mats = [L0, L1, 0.1 * rng.standard_normal((dim, dim)),
                0.05 * rng.standard_normal((dim, dim))]
    else:
        mats = [L0, L1]
    Q0 = rng.standard_normal(dim)
    Q1 = 0.2 * rng.standard_normal(dim) if cubic else np.zeros(dim)
    Qd0 = rng.standard_normal(dim)
    Qd2 = 0.1 * rng.standard_normal(dim) if cubic else np.zeros(dim)
    base = SystemParams(
        PolyMatrix(np.stack(mats)),
        PolyVector(np.stack([Q0, Q1])),
        PolyVector(np.stack([Qd0, np.zeros(dim), Qd2])),
    )
    dL0 = pert_scale * rng.standard_normal((dim, dim))
    dL1 = np.zeros((dim, dim)) if remote else 0.8 * pert_scale * rng.standard_normal((dim, dim))
    dQ = 0.5 * pert_scale * rng.standard_normal(dim) if excite_sources else np.zeros(dim)
    dQd = 0.5 * pert_scale * rng.standard_normal(dim) if excite_sources else np.zeros(dim)
    pert = SystemParams(
        PolyMatrix(np.stack([dL0, dL1])),
        PolyVector.constant(dQ),
        PolyVector.constant(dQd),
    )
    R0 = float(Qd0 @ flux(L0, Q0))
    if abs(R0) < 0.1:
        return None
    return CombinedFamily(base, pert), GaugeReference(R0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
