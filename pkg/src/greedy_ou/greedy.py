"""Energy form on separated functions and the greedy rank-one solvers.

Everything is posed in the u = psi/M representation, so the bilinear form on
an N-fold product domain is

    a(u, v) = sum_ij (A_ij / 4 wi) int M du/dq_j dv/dq_i + c int M u v

with A the symmetric positive-definite coupling matrix.  On rank-one tensors
the integrals factor into per-coordinate pairings against the assembled
factor matrices, which keeps every residual evaluation low-rank: a greedy
iterate is a list of (weight, rank-one term) pairs and its residual is the
right-hand side minus the corresponding list of energy pairings.

The rank-one subproblem min_u J_f(u) = 1/2 a(u,u) - f(u) is solved by
alternating sweeps: freezing all factors but slot j leaves a small symmetric
positive-definite system in the slot-j coefficients.  Stationary points
satisfy a(r, .) = f(.) against all single-slot perturbations, which is what
the orthogonality and energy-decrease identities of both greedy loops rely
on; global minimality of a sweep limit is not certifiable and is everywhere
treated as such.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, solve

from .fem import FactorMatrices

logger = logging.getLogger(__name__)

# factor mass norms below this declare a rank-one term null
_NULL_MASS_NORM = 1e-14
# Gram condition number beyond which the captured dictionary is re-orthogonalized
_GRAM_COND_LIMIT = 1e12

ENERGY = "energy"
SOURCE = "source"


class GreedyError(RuntimeError):
    """Driver-level failure, carries the iteration index in the message."""


class AlsError(RuntimeError):
    """Restartable ALS failure (singular slot system or increasing J)."""


class NullTermError(RuntimeError):
    """The rank-one minimizer is null: residual orthogonal to rank-one set."""


@dataclass(frozen=True)
class EnergyForm:
    """Coupling matrix A, Weissenberg number wi, and reaction coefficient c."""

    coupling: np.ndarray
    wi: float
    c: float

    def __post_init__(self):
        a = np.asarray(self.coupling, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"coupling matrix must be square, got shape {a.shape}")
        if not np.allclose(a, a.T, rtol=0, atol=1e-12 * (1 + np.abs(a).max())):
            raise ValueError("coupling matrix must be symmetric")
        object.__setattr__(self, "coupling", 0.5 * (a + a.T))
        evals = np.linalg.eigvalsh(self.coupling)
        if evals[0] <= 0:
            raise ValueError(
                f"coupling matrix not positive definite: smallest eigenvalue is {evals[0]:.6e}")
        if self.wi <= 0:
            raise ValueError(f"wi must be positive, got {self.wi!r}")
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c!r}")
        object.__setattr__(self, "_eig_range", (float(evals[0]), float(evals[-1])))

    @property
    def n_factors(self) -> int:
        return self.coupling.shape[0]

    @property
    def lambda_min(self) -> float:
        return self._eig_range[0]

    @property
    def coercivity(self) -> float:
        return min(self.lambda_min / (4.0 * self.wi), self.c)

    @property
    def continuity(self) -> float:
        return max(self._eig_range[1] / (4.0 * self.wi), self.c)


@dataclass
class RankOneTerm:
    """One tensor-product term, one coefficient vector per factor."""

    factors: list

    def copy(self) -> "RankOneTerm":
        return RankOneTerm([np.array(f, dtype=float) for f in self.factors])

    def is_null(self) -> bool:
        return all(np.all(f == 0.0) for f in self.factors)


@dataclass
class SeparatedFunction:
    """Sum of weighted rank-one terms."""

    terms: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return len(self.terms)


def zero_term(mats) -> RankOneTerm:
    return RankOneTerm([np.zeros(m.ndof) for m in mats])


def mass_norm(mats_k: FactorMatrices, vec: np.ndarray) -> float:
    return float(np.sqrt(max(vec @ mats_k.mass @ vec, 0.0)))


def normalize_term(mats, term: RankOneTerm) -> RankOneTerm:
    """Scale factors 1..N-1 to unit mass norm, folding magnitudes into the last."""
    norms = [mass_norm(m, f) for m, f in zip(mats, term.factors)]
    if min(norms) == 0.0:
        return zero_term(mats)
    out = [f / nu for f, nu in zip(term.factors[:-1], norms[:-1])]
    out.append(term.factors[-1] * float(np.prod(norms[:-1])))
    return RankOneTerm(out)


def _check_sizes(form: EnergyForm, mats, *terms):
    n = form.n_factors
    if len(mats) != n:
        raise ValueError(f"expected {n} factor matrices, got {len(mats)}")
    for t in terms:
        if len(t.factors) != n:
            raise ValueError(f"rank-one term has {len(t.factors)} factors, expected {n}")
        for k, f in enumerate(t.factors):
            if f.shape != (mats[k].ndof,):
                raise ValueError(f"factor {k} has {f.shape[0]} coefficients, "
                                 f"basis has {mats[k].ndof}")


def _prod_except(vals, skip):
    out = 1.0
    for k, v in enumerate(vals):
        if k not in skip:
            out *= v
    return out


def energy_rank1(form: EnergyForm, mats, u: RankOneTerm, v: RankOneTerm) -> float:
    """a(u, v) for rank-one u (trial) and v (test).

    Factorizes into per-coordinate mass, stiffness, and gradient pairings;
    the (i, j) coupling entry puts the derivative on u's factor j and v's
    factor i.
    """
    _check_sizes(form, mats, u, v)
    n = form.n_factors
    a, quarter = form.coupling, 1.0 / (4.0 * form.wi)
    m = [v.factors[k] @ (mats[k].mass @ u.factors[k]) for k in range(n)]
    s = [v.factors[k] @ (mats[k].stiffness @ u.factors[k]) for k in range(n)]
    du = [v.factors[k] @ (mats[k].grad_coupling @ u.factors[k]) for k in range(n)]
    dv = [u.factors[k] @ (mats[k].grad_coupling @ v.factors[k]) for k in range(n)]
    total = form.c * _prod_except(m, ())
    for i in range(n):
        total += a[i, i] * quarter * s[i] * _prod_except(m, {i})
    for i in range(n):
        for j in range(n):
            if i != j and a[i, j] != 0.0:
                total += a[i, j] * quarter * du[j] * dv[i] * _prod_except(m, {i, j})
    return float(total)


def mass_rank1(mats, u: RankOneTerm, v: RankOneTerm) -> float:
    """L2_M pairing of two rank-one terms."""
    out = 1.0
    for k, m in enumerate(mats):
        out *= v.factors[k] @ (m.mass @ u.factors[k])
    return float(out)


def energy_pairing(form: EnergyForm, mats, f: SeparatedFunction, g: SeparatedFunction) -> float:
    return float(sum(wf * wg * energy_rank1(form, mats, tf, tg)
                     for wf, tf in f.terms for wg, tg in g.terms))


def energy_norm(form: EnergyForm, mats, f: SeparatedFunction) -> float:
    return float(np.sqrt(max(energy_pairing(form, mats, f, f), 0.0)))


def mass_pairing(mats, f: SeparatedFunction, g: SeparatedFunction) -> float:
    return float(sum(wf * wg * mass_rank1(mats, tf, tg)
                     for wf, tf in f.terms for wg, tg in g.terms))


@dataclass
class Functional:
    """Bounded functional in separated form: sum of weighted rank-one pairings.

    Each term is (weight, RankOneTerm, kind).  Kind "energy" pairs through
    the bilinear form, f(v) = w a(t, v); kind "source" pairs through the
    weighted mass, f(v) = w (t, v)_{L2_M}.
    """

    terms: list = field(default_factory=list)

    @classmethod
    def from_target(cls, target: SeparatedFunction) -> "Functional":
        """f = a(tau, .) for a known separated target tau."""
        return cls([(w, t, ENERGY) for w, t in target.terms])

    @classmethod
    def from_source(cls, source: SeparatedFunction) -> "Functional":
        """f = (g, .)_{L2_M} for a separated source g."""
        return cls([(w, t, SOURCE) for w, t in source.terms])

    def copy(self) -> "Functional":
        return Functional(list(self.terms))

    def append_energy(self, weight: float, term: RankOneTerm):
        self.terms.append((float(weight), term, ENERGY))

    def value_rank1(self, form: EnergyForm, mats, v: RankOneTerm) -> float:
        total = 0.0
        for w, t, kind in self.terms:
            if kind == ENERGY:
                total += w * energy_rank1(form, mats, t, v)
            else:
                total += w * mass_rank1(mats, t, v)
        return total

    def slot_vector(self, form: EnergyForm, mats, frozen: RankOneTerm, j: int) -> np.ndarray:
        """Vector b with f(frozen but slot j -> y) = y . b."""
        n = form.n_factors
        a, quarter = form.coupling, 1.0 / (4.0 * form.wi)
        b = np.zeros(mats[j].ndof)
        for w, t, kind in self.terms:
            if kind == SOURCE:
                coeff = w * _prod_except(
                    [frozen.factors[k] @ (mats[k].mass @ t.factors[k]) for k in range(n)], {j})
                b += coeff * (mats[j].mass @ t.factors[j])
                continue
            r = frozen.factors
            m = [r[k] @ (mats[k].mass @ t.factors[k]) for k in range(n)]
            s = [r[k] @ (mats[k].stiffness @ t.factors[k]) for k in range(n)]
            du = [r[k] @ (mats[k].grad_coupling @ t.factors[k]) for k in range(n)]
            dv = [t.factors[k] @ (mats[k].grad_coupling @ r[k]) for k in range(n)]
            mass_coeff = form.c * _prod_except(m, {j})
            for i in range(n):
                if i != j:
                    mass_coeff += a[i, i] * quarter * s[i] * _prod_except(m, {i, j})
            for i in range(n):
                for jp in range(n):
                    if i != jp and i != j and jp != j and a[i, jp] != 0.0:
                        mass_coeff += (a[i, jp] * quarter * du[jp] * dv[i]
                                       * _prod_except(m, {i, jp, j}))
            b += w * mass_coeff * (mats[j].mass @ t.factors[j])
            b += w * a[j, j] * quarter * _prod_except(m, {j}) * (mats[j].stiffness @ t.factors[j])
            grad_coeff = sum(a[i, j] * quarter * dv[i] * _prod_except(m, {i, j})
                             for i in range(n) if i != j)
            tgrad_coeff = sum(a[j, jp] * quarter * du[jp] * _prod_except(m, {j, jp})
                              for jp in range(n) if jp != j)
            if grad_coeff != 0.0:
                b += w * grad_coeff * (mats[j].grad_coupling @ t.factors[j])
            if tgrad_coeff != 0.0:
                b += w * tgrad_coeff * (mats[j].grad_coupling.T @ t.factors[j])
        return b


def _slot_hessian(form: EnergyForm, mats, frozen: RankOneTerm, j: int) -> np.ndarray:
    """Hessian of u -> a(term with slot j -> u, same) over slot-j coefficients."""
    n = form.n_factors
    a, quarter = form.coupling, 1.0 / (4.0 * form.wi)
    r = frozen.factors
    p = [r[k] @ (mats[k].mass @ r[k]) for k in range(n)]
    s = [r[k] @ (mats[k].stiffness @ r[k]) for k in range(n)]
    th = [r[k] @ (mats[k].grad_coupling @ r[k]) for k in range(n)]
    beta = form.c * _prod_except(p, {j})
    for i in range(n):
        if i != j:
            beta += a[i, i] * quarter * s[i] * _prod_except(p, {i, j})
    for i in range(n):
        for ip in range(n):
            if i != ip and i != j and ip != j and a[i, ip] != 0.0:
                beta += a[i, ip] * quarter * th[i] * th[ip] * _prod_except(p, {i, ip, j})
    gamma = a[j, j] * quarter * _prod_except(p, {j})
    kappa = sum(a[i, j] * quarter * th[i] * _prod_except(p, {i, j})
                for i in range(n) if i != j)
    h = beta * mats[j].mass + gamma * mats[j].stiffness
    if kappa != 0.0:
        h = h + kappa * (mats[j].grad_coupling + mats[j].grad_coupling.T)
    return h


def als_rank1(form: EnergyForm, mats, rhs: Functional, init: RankOneTerm,
              tol: float = 1e-10, max_sweeps: int = 60):
    """Alternating minimization of J(u) = 1/2 a(u,u) - rhs(u) over rank-one u.

    Each slot solve is a symmetric positive-definite system; sweeps stop when
    the relative change of J drops below tol or max_sweeps is hit.  Returns
    (term, J) with the term normalized so factors 1..N-1 have unit mass norm.

    Raises AlsError on a singular slot system or an increasing J (restart
    with a different init), NullTermError when a slot minimizer collapses
    below mass norm 1e-14 (residual orthogonal to the rank-one set).
    """
    _check_sizes(form, mats, init)
    if not rhs.terms:
        return zero_term(mats), 0.0
    n = form.n_factors
    r = init.copy()
    for k in range(n):
        if mass_norm(mats[k], r.factors[k]) < _NULL_MASS_NORM:
            raise ValueError(f"init factor {k} is zero")
    j_prev = np.inf
    j_val = np.inf
    for sweep in range(max_sweeps):
        for j in range(n):
            h = _slot_hessian(form, mats, r, j)
            b = rhs.slot_vector(form, mats, r, j)
            try:
                u = cho_solve(cho_factor(h), b)
            except np.linalg.LinAlgError as exc:
                raise AlsError(f"slot {j} system not positive definite: {exc}") from exc
            if mass_norm(mats[j], u) < _NULL_MASS_NORM:
                raise NullTermError("residual orthogonal to rank-one set")
            r.factors[j] = u
            # at the fresh slot minimum J = -1/2 b.u
            j_val = -0.5 * float(b @ u)
        r = normalize_term(mats, r)
        if j_val > j_prev + 1e-12 * (1.0 + abs(j_prev)):
            raise AlsError(f"J increased across sweep {sweep}: {j_prev!r} -> {j_val!r}")
        if abs(j_prev - j_val) <= tol * (1.0 + abs(j_val)):
            break
        j_prev = j_val
    return r, float(j_val)


def random_unit_term(mats, rng) -> RankOneTerm:
    """Random start: factor-wise standard normals, unit mass norm each."""
    factors = []
    for m in mats:
        v = rng.standard_normal(m.ndof)
        factors.append(v / mass_norm(m, v))
    return RankOneTerm(factors)


def als_best(form: EnergyForm, mats, rhs: Functional, *, tol: float = 1e-10,
             max_sweeps: int = 60, restarts: int = 1, rng=None):
    """Multi-start ALS, keeping the lowest-J stationary point.

    NullTermError propagates only if every start collapses; a failed start
    (AlsError) is retried from the next random init.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    best = None
    nulls = 0
    failures = []
    for attempt in range(max(restarts, 1)):
        init = random_unit_term(mats, rng)
        try:
            term, j_val = als_rank1(form, mats, rhs, init, tol=tol, max_sweeps=max_sweeps)
        except NullTermError:
            nulls += 1
            continue
        except AlsError as exc:
            failures.append(str(exc))
            logger.debug("ALS start %d failed: %s", attempt, exc)
            continue
        if best is None or j_val < best[1]:
            best = (term, j_val)
    if best is not None:
        return best
    if nulls:
        raise NullTermError("residual orthogonal to rank-one set")
    raise AlsError("all ALS starts failed: " + "; ".join(failures[-3:]))


@dataclass(frozen=True)
class TraceRow:
    n: int
    err_energy: float  # nan when no target is known
    term_norm_a: float
    ortho_defect: float
    surrogate: float
    alpha: tuple | None  # Galerkin coefficients, orthogonal algorithm only


@dataclass
class GreedyTrace:
    rows: list = field(default_factory=list)
    status: str = "n_max"  # converged | n_max | null_term
    final_surrogate: float | None = None  # candidate value that triggered the stop


def stopping_surrogate(trace: GreedyTrace) -> float:
    """Relative captured-term norm at the last recorded iteration."""
    if not trace.rows:
        raise ValueError("trace has no recorded iterations")
    return trace.rows[-1].surrogate


def _err_energy(form, mats, target, approx_terms):
    if target is None:
        return float("nan")
    diff = SeparatedFunction(list(target.terms) + [(-w, t) for w, t in approx_terms])
    return energy_norm(form, mats, diff)


def _greedy_loop(form, mats, rhs, tol_stop, n_max, *, als_tol, max_sweeps,
                 restarts, rng, target, orthogonal):
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1, got {n_max}")
    approx = SeparatedFunction([])
    trace = GreedyTrace()
    residual = rhs.copy()
    captured = []  # normalized dictionary terms
    alpha = np.zeros(0)
    gram = np.zeros((0, 0))
    fvec = np.zeros(0)
    r1_norm = None
    for n in range(1, n_max + 1):
        try:
            term, j_val = als_best(form, mats, residual, tol=als_tol,
                                   max_sweeps=max_sweeps, restarts=restarts, rng=rng)
        except NullTermError:
            logger.info("iteration %d: residual orthogonal to rank-one set, stopping", n)
            trace.status = "null_term"
            return approx, trace
        except AlsError as exc:
            raise GreedyError(f"iteration {n}: {exc}") from exc
        norm_n = float(np.sqrt(max(energy_rank1(form, mats, term, term), 0.0)))
        if norm_n == 0.0:
            trace.status = "null_term"
            return approx, trace
        if r1_norm is None:
            r1_norm = norm_n
        surrogate = norm_n / r1_norm
        if n > 1 and surrogate < tol_stop:
            # candidate is negligible; do not record it
            trace.status = "converged"
            trace.final_surrogate = surrogate
            return approx, trace
        captured.append(term)
        if orthogonal:
            k = len(captured)
            g = np.zeros((k, k))
            g[:-1, :-1] = gram
            for i in range(k):
                g[i, -1] = g[-1, i] = energy_rank1(form, mats, captured[i], term)
            gram = 0.5 * (g + g.T)
            fvec = np.append(fvec, rhs.value_rank1(form, mats, term))
            alpha = _solve_galerkin(gram, fvec)
            approx = SeparatedFunction([(float(a), t) for a, t in zip(alpha, captured)])
            residual = rhs.copy()
            for a, t in zip(alpha, captured):
                residual.append_energy(-float(a), t)
            alpha_out = tuple(float(a) for a in alpha)
        else:
            approx.terms.append((1.0, term))
            residual.append_energy(-1.0, term)
            alpha_out = None
        ortho_defect = residual.value_rank1(form, mats, term)
        trace.rows.append(TraceRow(
            n=n,
            err_energy=_err_energy(form, mats, target, approx.terms),
            term_norm_a=norm_n,
            ortho_defect=float(ortho_defect),
            surrogate=float(surrogate),
            alpha=alpha_out,
        ))
        if surrogate < tol_stop:
            trace.status = "converged"
            trace.final_surrogate = surrogate
            return approx, trace
    trace.status = "n_max"
    return approx, trace


def _solve_galerkin(gram: np.ndarray, fvec: np.ndarray) -> np.ndarray:
    """Galerkin solve with symmetric pivoting; re-orthogonalize when degenerate.

    Condition above 1e12 means captured terms have become nearly dependent;
    the eigendecomposition restricts the solve to the well-conditioned span,
    which is an orthogonalization of the dictionary in the a-inner product.
    """
    evals, evecs = eigh(gram)
    emax = evals[-1]
    cond = np.inf if evals[0] <= 0 else emax / evals[0]
    if cond <= _GRAM_COND_LIMIT:
        return solve(gram, fvec, assume_a="sym")
    logger.info("Gram matrix condition %.3e, re-orthogonalizing dictionary", cond)
    keep = evals > emax * 1e-13
    proj = evecs[:, keep].T @ fvec
    return evecs[:, keep] @ (proj / evals[keep])


def run_pga(form: EnergyForm, mats, rhs: Functional, tol_stop: float = 1e-6,
            n_max: int = 50, *, als_tol: float = 1e-10, max_sweeps: int = 60,
            restarts: int = 1, rng=None, target: SeparatedFunction | None = None):
    """Pure greedy loop: capture a rank-one term, subtract it, repeat.

    The residual functional stays in separated form.  Stops when the next
    captured term's relative norm drops below tol_stop, the residual is
    orthogonal to every rank-one candidate, or n_max is reached.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    return _greedy_loop(form, mats, rhs, tol_stop, n_max, als_tol=als_tol,
                        max_sweeps=max_sweeps, restarts=restarts, rng=rng,
                        target=target, orthogonal=False)


def run_oga(form: EnergyForm, mats, rhs: Functional, tol_stop: float = 1e-6,
            n_max: int = 50, *, als_tol: float = 1e-10, max_sweeps: int = 60,
            restarts: int = 1, rng=None, target: SeparatedFunction | None = None):
    """Orthogonal greedy loop: after each capture, re-solve the Galerkin
    system over the captured span and rebuild the residual from scratch."""
    if rng is None:
        rng = np.random.default_rng(0)
    return _greedy_loop(form, mats, rhs, tol_stop, n_max, als_tol=als_tol,
                        max_sweeps=max_sweeps, restarts=restarts, rng=rng,
                        target=target, orthogonal=True)


def assemble_dense(form: EnergyForm, mats) -> np.ndarray:
    """Full Kronecker assembly of the energy form; small grids only."""
    n = form.n_factors
    quarter = 1.0 / (4.0 * form.wi)
    masses = [m.mass for m in mats]

    def kron_chain(slot_mats):
        return reduce(np.kron, slot_mats)

    total = form.c * kron_chain(masses)
    for i in range(n):
        slots = list(masses)
        slots[i] = mats[i].stiffness
        total = total + form.coupling[i, i] * quarter * kron_chain(slots)
    for i in range(n):
        for j in range(n):
            if i == j or form.coupling[i, j] == 0.0:
                continue
            slots = list(masses)
            slots[j] = mats[j].grad_coupling       # derivative on the trial slot
            slots[i] = mats[i].grad_coupling.T     # derivative on the test slot
            total = total + form.coupling[i, j] * quarter * kron_chain(slots)
    return total


def dense_functional_vector(form: EnergyForm, mats, functional: Functional,
                            dense_form: np.ndarray | None = None) -> np.ndarray:
    """Functional applied to every tensor-product basis function."""
    if dense_form is None:
        dense_form = assemble_dense(form, mats)
    out = np.zeros(dense_form.shape[0])
    for w, t, kind in functional.terms:
        vec = reduce(np.kron, t.factors)
        if kind == ENERGY:
            out += w * (dense_form @ vec)
        else:
            out += w * reduce(np.kron, [m.mass @ f for m, f in zip(mats, t.factors)])
    return out


def exact_dual_norm(form: EnergyForm, mats, functional: Functional,
                    max_dof: int = 10_000) -> float:
    """Dual norm of a functional via the dense Riesz representer.

    Solves a(zeta, .) = f(.) on the full tensor grid; refused above max_dof
    total degrees of freedom.
    """
    total_dof = int(np.prod([m.ndof for m in mats]))
    if total_dof > max_dof:
        raise ValueError(f"dense dual norm needs {total_dof} dof, budget is {max_dof}")
    a_full = assemble_dense(form, mats)
    fvec = dense_functional_vector(form, mats, functional, a_full)
    zeta = cho_solve(cho_factor(a_full), fvec)
    return float(np.sqrt(max(zeta @ fvec, 0.0)))
