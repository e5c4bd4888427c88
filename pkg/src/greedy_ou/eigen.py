"""Factor eigenpairs of the weighted H1 form and their tensorization.

Each factor carries the generalized problem

    (stiffness + mass) e = lambda mass e

whose smallest pair is (1, const) because constants have no stiffness
energy.  Tensorized eigenvalues follow the additive rule
lambda_n = 1 + sum_i (lambda^(i)_{n_i} - 1), and the discrete spectrum obeys
a two-sided n^2 growth law on the mesh-resolved range, which weyl_fit
measures.  Discrete eigenvalues over-approximate the continuum ones at high
index, so a refinement gate marks how far a mesh can be trusted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .fem import FactorMatrices, assemble, build_mesh
from .springs import MaxwellianWeight

logger = logging.getLogger(__name__)

RESOLVED_REL_TOL = 1e-3


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True)
class FactorEigens:
    """Ascending eigenvalues with mass-orthonormal vectors for one factor."""

    values: np.ndarray
    vectors: np.ndarray
    mats: FactorMatrices
    resolved: np.ndarray | None = None

    @property
    def k(self) -> int:
        return len(self.values)

    @property
    def n_resolved(self) -> int:
        """Length of the leading resolved run; k when no gate was computed."""
        if self.resolved is None:
            return self.k
        bad = np.flatnonzero(~self.resolved)
        return int(bad[0]) if bad.size else self.k


@dataclass(frozen=True)
class EigenSystem:
    factors: list

    @property
    def n_factors(self) -> int:
        return len(self.factors)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def solve_factor_eigens(mats: FactorMatrices, k: int) -> FactorEigens:
    """k smallest eigenpairs of (stiffness + mass) e = lambda mass e."""
    if not 1 <= k <= mats.ndof:
        raise ValueError(f"k must be in [1, {mats.ndof}], got {k}")
    try:
        values, vectors = eigh(mats.stiffness + mats.mass, mats.mass,
                               subset_by_index=[0, k - 1])
    except np.linalg.LinAlgError as exc:
        raise EigenError(f"factor eigensolve failed: {exc}") from exc
    return FactorEigens(values=values, vectors=_fix_signs(vectors), mats=mats)


def resolved_factor_eigens(weight: MaxwellianWeight, n_el: int, k: int,
                           grading: float = 1.0, degree: int = 2,
                           rel_tol: float = RESOLVED_REL_TOL) -> FactorEigens:
    """Eigens on the requested mesh, gated against a once-refined mesh.

    Eigenvalue n is resolved when doubling the element count changes it by
    at most rel_tol relatively.  Vectors stay on the requested mesh so they
    remain usable against that basis.
    """
    b = weight.q_max ** 2
    coarse = assemble(build_mesh(b, n_el, grading), weight, degree)
    fine = assemble(build_mesh(b, 2 * n_el, grading), weight, degree)
    if k > coarse.ndof:
        raise ValueError(f"k must be in [1, {coarse.ndof}], got {k}")
    eig_c = solve_factor_eigens(coarse, k)
    eig_f = solve_factor_eigens(fine, k)
    rel = np.abs(eig_f.values - eig_c.values) / eig_c.values
    return FactorEigens(values=eig_c.values, vectors=eig_c.vectors,
                        mats=coarse, resolved=rel <= rel_tol)


def tensor_eigenvalue(sys: EigenSystem, idx) -> float:
    """Eigenvalue of the tensorized pair at 1-based multi-index idx."""
    if len(idx) != sys.n_factors:
        raise ValueError(f"index has {len(idx)} components, expected {sys.n_factors}")
    total = 1.0
    for i, n in enumerate(idx):
        if not 1 <= n <= sys.factors[i].k:
            raise IndexError(f"component {i} index {n} outside [1, {sys.factors[i].k}]")
        total += sys.factors[i].values[n - 1] - 1.0
    return float(total)


@dataclass(frozen=True)
class WeylFit:
    c1: float
    c2: float

    @property
    def ratio(self) -> float:
        return self.c2 / self.c1


def weyl_fit(values, d: int = 1, tail=(10, 40), resolved=None) -> WeylFit:
    """Two-sided growth constants of lambda_n against n^(2/d) over a tail.

    tail is an inclusive 1-based index range.  Warns when the tail reaches
    past the resolved flags: unresolved discrete eigenvalues grow faster
    than the continuum ones and inflate c2.
    """
    values = np.asarray(values, dtype=float)
    lo, hi = tail
    if not 1 <= lo <= hi <= len(values):
        raise ValueError(f"tail {tail} outside [1, {len(values)}]")
    if resolved is not None and not np.all(np.asarray(resolved)[lo - 1:hi]):
        logger.warning("weyl tail %s extends beyond mesh-resolved eigenvalues", tail)
    n = np.arange(lo, hi + 1, dtype=float)
    ratios = values[lo - 1:hi] / n ** (2.0 / d)
    return WeylFit(c1=float(ratios.min()), c2=float(ratios.max()))
