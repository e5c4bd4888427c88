"""Weighted finite elements on one factor interval.

Meshes cover [-sqrt(b), sqrt(b)] with optional grading toward the endpoints,
where the Maxwellian weight vanishes.  Assembly produces the three matrices
every weighted pairing in this package reduces to:

    mass[k,l]          = int M phi_l  phi_k
    stiffness[k,l]     = int M phi_l' phi_k'
    grad_coupling[k,l] = int M phi_l' phi_k

No essential boundary conditions are imposed: the natural weighted space
contains the constants, and the weight itself supplies the boundary decay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .springs import MaxwellianWeight

# subpanels per boundary element, shrinking geometrically toward the endpoint
_BOUNDARY_SPLIT = 12


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class FactorMesh:
    """Sorted node coordinates spanning [-sqrt(b), sqrt(b)]."""

    nodes: np.ndarray
    grading: float

    @property
    def n_el(self) -> int:
        return len(self.nodes) - 1


def build_mesh(b: float, n_el: int, grading: float = 1.0) -> FactorMesh:
    """Symmetric mesh on [-sqrt(b), sqrt(b)], clustered at the endpoints for grading > 1.

    Node map: x = sqrt(b) * sign(u) * (1 - (1 - |u|)^grading) for uniform
    u in [-1, 1]; grading = 1 is the uniform mesh.
    """
    if n_el < 4:
        raise ValueError(f"n_el must be at least 4, got {n_el}")
    if grading < 1.0:
        raise ValueError(f"grading must be >= 1, got {grading!r}")
    q_max = float(np.sqrt(b))
    u = np.linspace(-1.0, 1.0, n_el + 1)
    x = q_max * np.sign(u) * (1.0 - (1.0 - np.abs(u)) ** grading)
    x[0], x[-1] = -q_max, q_max
    return FactorMesh(nodes=x, grading=float(grading))


@dataclass(frozen=True)
class FactorMatrices:
    """Weighted mass/stiffness/gradient-coupling matrices for one factor."""

    mass: np.ndarray
    stiffness: np.ndarray
    grad_coupling: np.ndarray
    mesh: FactorMesh
    degree: int
    weight: MaxwellianWeight

    @property
    def ndof(self) -> int:
        return self.mass.shape[0]


def _shape_functions(degree, xi):
    """Lagrange shape functions and derivatives on the reference element [-1, 1]."""
    xi = np.asarray(xi)
    if degree == 1:
        vals = np.stack([0.5 * (1 - xi), 0.5 * (1 + xi)])
        ders = np.stack([np.full_like(xi, -0.5), np.full_like(xi, 0.5)])
    else:
        vals = np.stack([0.5 * xi * (xi - 1), 1 - xi * xi, 0.5 * xi * (xi + 1)])
        ders = np.stack([xi - 0.5, -2 * xi, xi + 0.5])
    return vals, ders


def _element_panels(x_left, x_right, at_left_boundary, at_right_boundary):
    """Integration subintervals for one element.

    Interior elements use a single panel; elements touching the domain
    boundary are split geometrically toward it, because the weight behaves
    like a fractional power of the boundary distance there.
    """
    if not (at_left_boundary or at_right_boundary):
        return [(x_left, x_right)]
    h = x_right - x_left
    s = _BOUNDARY_SPLIT
    if at_right_boundary:
        inner = x_right - h * 0.5 ** np.arange(1, s + 1)
    else:
        inner = x_left + h * 0.5 ** np.arange(s, 0, -1)
    pts = np.concatenate([[x_left], inner, [x_right]])
    return list(zip(pts[:-1], pts[1:]))


def assemble(mesh: FactorMesh, weight: MaxwellianWeight, basis_degree: int = 2) -> FactorMatrices:
    """Assemble the weighted matrices with continuous P1 or P2 Lagrange elements.

    Quadrature per panel is Gauss-Legendre with basis_degree + 4 points,
    exact beyond degree 2*basis_degree + 6 against the smooth part of the
    weight.
    """
    if basis_degree not in (1, 2):
        raise ValueError(f"basis_degree must be 1 or 2, got {basis_degree}")
    p = basis_degree
    nodes = mesh.nodes
    n_el = mesh.n_el
    ndof = n_el * p + 1
    mass = np.zeros((ndof, ndof))
    stiff = np.zeros((ndof, ndof))
    grad = np.zeros((ndof, ndof))
    xi, wq = np.polynomial.legendre.leggauss(p + 4)

    for e in range(n_el):
        xl, xr = nodes[e], nodes[e + 1]
        dofs = np.arange(p * e, p * e + p + 1)
        panels = _element_panels(xl, xr, at_left_boundary=(e == 0),
                                 at_right_boundary=(e == n_el - 1))
        m_el = np.zeros((p + 1, p + 1))
        k_el = np.zeros((p + 1, p + 1))
        c_el = np.zeros((p + 1, p + 1))
        inv_jac = 2.0 / (xr - xl)
        for a, b in panels:
            half = 0.5 * (b - a)
            x = 0.5 * (a + b) + half * xi
            # reference coordinate of the full element, not the panel
            xi_el = (2.0 * x - (xl + xr)) / (xr - xl)
            vals, ders = _shape_functions(p, xi_el)
            mw = weight(x)
            if not np.all(np.isfinite(mw)):
                raise AssemblyError(f"weight evaluation failed on element {e}")
            wv = wq * half * mw
            root = np.sqrt(wv)
            # sqrt-weight factorization keeps mass/stiffness bitwise symmetric
            vr = vals * root
            dr = inv_jac * (ders * root)
            m_el += vr @ vr.T
            k_el += dr @ dr.T
            # c_el[k,l] = int M phi_l' phi_k
            c_el += vr @ dr.T
        mass[np.ix_(dofs, dofs)] += m_el
        stiff[np.ix_(dofs, dofs)] += k_el
        grad[np.ix_(dofs, dofs)] += c_el

    return FactorMatrices(mass=mass, stiffness=stiff, grad_coupling=grad,
                          mesh=mesh, degree=p, weight=weight)


def dof_coordinates(mats: FactorMatrices) -> np.ndarray:
    """Physical coordinates of the Lagrange degrees of freedom."""
    nodes = mats.mesh.nodes
    if mats.degree == 1:
        return nodes.copy()
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    out = np.empty(mats.ndof)
    out[0::2] = nodes
    out[1::2] = mids
    return out


def interpolate(mats: FactorMatrices, fn) -> np.ndarray:
    """Nodal interpolation of a callable onto the factor basis."""
    return np.asarray(fn(dof_coordinates(mats)), dtype=float)
