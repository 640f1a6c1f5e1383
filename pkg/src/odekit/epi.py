"""Disease-free equilibrium and the basic reproduction number.

R0 is the spectral radius of ``F V^-1`` (next-generation matrix), where at
the disease-free equilibrium ``F`` is the Jacobian of the rates of new
infections into the disease states and ``V`` that of every other net outflow
from them.  A transition counts as a new infection when it is of type T, no
origin is a disease state and some destination is.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import ModelError, SingularMatrixError
from .model import OdeModel, TransitionType


@dataclass(frozen=True)
class DiseaseSplit:
    disease: tuple
    others: tuple
    new_infection: tuple   # indices into model.jump_channels
    transfer: tuple


def split(model: OdeModel, disease_states: Sequence[str]) -> DiseaseSplit:
    if isinstance(disease_states, str):
        disease_states = [disease_states]
    disease = tuple(disease_states)
    if not disease:
        raise ModelError("at least one disease state is required")
    unknown = [s for s in disease if s not in model.states]
    if unknown:
        raise ModelError(f"unknown disease states {unknown}")
    if not model.is_transition_form:
        raise ModelError("R0 needs a model of T/B/D transitions; unroll the model first")
    new, other = [], []
    for j, tr in enumerate(model.jump_channels):
        if (tr.transition_type is TransitionType.T
                and not set(tr.origin) & set(disease) and set(tr.destination) & set(disease)):
            new.append(j)
        else:
            other.append(j)
    others = tuple(s for s in model.states if s not in disease)
    return DiseaseSplit(disease, others, tuple(new), tuple(other))


# -- symbolic linear algebra -----------------------------------------------

def _solve_linear(A, b, names):
    """Solve ``A x = b`` over expressions by Gaussian elimination."""
    n = len(b)
    A = [list(row) for row in A]
    b = list(b)
    for col in range(n):
        pivot = next((r for r in range(col, n) if not ex.is_zero(A[r][col])), None)
        if pivot is None:
            raise SingularMatrixError(f"equilibrium is not unique: no equation determines {names[col]}")
        A[col], A[pivot] = A[pivot], A[col]
        b[col], b[pivot] = b[pivot], b[col]
        for r in range(col + 1, n):
            if ex.is_zero(A[r][col]):
                continue
            f = ex.div(A[r][col], A[col][col])
            A[r] = [ex.simplify(ex.sub(A[r][k], ex.mul(f, A[col][k]))) for k in range(n)]
            b[r] = ex.simplify(ex.sub(b[r], ex.mul(f, b[col])))
    x = [ex.ZERO] * n
    for r in range(n - 1, -1, -1):
        acc = b[r]
        for k in range(r + 1, n):
            if not ex.is_zero(A[r][k]):
                acc = ex.sub(acc, ex.mul(A[r][k], x[k]))
        x[r] = ex.simplify(ex.div(acc, A[r][r]))
    return x


def dfe(model: OdeModel, disease_states: Sequence[str], states: Sequence[str] | None = None) -> dict:
    """Disease-free equilibrium as ``{state: Expr}``.

    Disease states are pinned to zero and the equilibrium equations of the
    remaining states (or just ``states``) are solved; they must be linear in
    those states with a unique solution.
    """
    sp = split(model, disease_states)
    targets = list(sp.others if states is None else states)
    bad = [s for s in targets if s not in sp.others]
    if bad:
        raise ModelError(f"{bad} are not non-disease states")
    zero = {s: ex.ZERO for s in sp.disease}
    eqs = [ex.substitute(model.rhs[model.states.index(s)], zero) for s in targets]
    A, b = [], []
    for s, e in zip(targets, eqs):
        row = [ex.differentiate(e, x) for x in targets]
        for a in row:
            if ex.free_symbols(a) & set(targets):
                raise ModelError(f"equilibrium equation of {s} is nonlinear in the non-disease states")
        A.append(row)
        b.append(ex.neg(ex.substitute(e, {x: ex.ZERO for x in targets})))
    stray = set().union(*(ex.free_symbols(e) for e in eqs)) & (set(sp.others) - set(targets))
    if stray:
        raise ModelError(f"equilibrium of {targets} also depends on {sorted(stray)}")
    solution = dict(zero)
    solution.update(zip(targets, _solve_linear(A, b, targets)))
    return solution


def _closure(model, sp, exprs):
    """Non-disease states needed to evaluate ``exprs`` at the equilibrium."""
    zero = {s: ex.ZERO for s in sp.disease}
    need = set().union(*(ex.free_symbols(e) for e in exprs)) & set(sp.others)
    while True:
        grown = set(need)
        for s in need:
            grown |= ex.free_symbols(ex.substitute(model.rhs[model.states.index(s)], zero)) & set(sp.others)
        if grown == need:
            return [s for s in sp.others if s in need]
        need = grown


def next_generation(model: OdeModel, disease_states: Sequence[str]):
    """``(F, V, equilibrium)`` with F and V as nested tuples of Expr at the DFE."""
    sp = split(model, disease_states)
    chans = model.jump_channels
    rates = model.channel_rates()
    stoich = [tr.stoichiometry() for tr in chans]
    f_vec = []
    for s in sp.disease:
        terms = [ex.mul(ex.const(stoich[j][s]), rates[j]) for j in sp.new_infection if stoich[j][s]]
        f_vec.append(ex.add(*terms) if terms else ex.ZERO)
    v_vec = [ex.sub(f, model.rhs[model.states.index(s)]) for s, f in zip(sp.disease, f_vec)]
    F = [[ex.differentiate(f, x) for x in sp.disease] for f in f_vec]
    V = [[ex.differentiate(v, x) for x in sp.disease] for v in v_vec]
    flat = [e for row in F + V for e in row]
    eq = dfe(model, sp.disease, _closure(model, sp, flat))
    F = tuple(tuple(ex.simplify(ex.substitute(e, eq)) for e in row) for row in F)
    V = tuple(tuple(ex.simplify(ex.substitute(e, eq)) for e in row) for row in V)
    return F, V, eq


def _inverse_small(M):
    d = len(M)
    if d == 1:
        if ex.is_zero(M[0][0]):
            raise SingularMatrixError("V is singular at the disease-free equilibrium")
        return [[ex.div(ex.ONE, M[0][0])]]
    a, b = M[0]
    c, e = M[1]
    # keep products unexpanded when the matrix is triangular
    if ex.is_zero(b) or ex.is_zero(c):
        det = ex.mul(a, e)
    else:
        det = ex.simplify(ex.sub(ex.mul(a, e), ex.mul(b, c)))
    if ex.is_zero(det):
        raise SingularMatrixError("V is singular at the disease-free equilibrium")
    return [[ex.div(e, det), ex.div(ex.neg(b), det)],
            [ex.div(ex.neg(c), det), ex.div(a, det)]]


def _matmul(X, Y):
    n, m, k = len(X), len(Y[0]), len(Y)
    return [[ex.simplify(ex.add(*[ex.mul(X[i][r], Y[r][j]) for r in range(k)])) for j in range(m)]
            for i in range(n)]


def _symbolic_radius(K):
    if len(K) == 1:
        return K[0][0]
    tr = ex.simplify(ex.add(K[0][0], K[1][1]))
    det = ex.simplify(ex.sub(ex.mul(K[0][0], K[1][1]), ex.mul(K[0][1], K[1][0])))
    if ex.is_zero(tr):
        return ex.pow_(ex.neg(det), ex.HALF)
    if ex.is_zero(det):
        return tr
    disc = ex.simplify(ex.sub(ex.pow_(tr, ex.const(2)), ex.mul(ex.const(4), det)))
    return ex.mul(ex.HALF, ex.add(tr, ex.pow_(disc, ex.HALF)))


# -- numeric spectral radius -------------------------------------------------

def _char_poly(K) -> np.ndarray:
    """Monic characteristic polynomial coefficients (Faddeev-LeVerrier)."""
    d = K.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(K)
    I = np.eye(d)
    for k in range(1, d + 1):
        M = K @ M + coeffs[-1] * I
        coeffs.append(-np.trace(K @ M) / k)
    return np.array(coeffs)


def _durand_kerner(coeffs, tol=1e-14, max_iter=1000):
    d = len(coeffs) - 1
    roots = [(0.4 + 0.9j) ** k for k in range(d)]

    def p(z):
        acc = 0j
        for c in coeffs:
            acc = acc * z + c
        return acc

    for _ in range(max_iter):
        new = []
        for i, z in enumerate(roots):
            den = 1.0 + 0j
            for j, w in enumerate(roots):
                if i != j:
                    den *= z - w
            new.append(z - p(z) / den if den != 0 else z + 1e-8)
        change = max(abs(a - b) for a, b in zip(new, roots))
        roots = new
        if change <= tol * max(1.0, max(abs(z) for z in roots)):
            break
    return roots


def spectral_radius(K) -> float:
    """Largest eigenvalue modulus of a small real matrix."""
    K = np.asarray(K, dtype=float)
    d = K.shape[0]
    if d == 1:
        return abs(K[0, 0])
    if d == 2:
        tr = K[0, 0] + K[1, 1]
        det = K[0, 0] * K[1, 1] - K[0, 1] * K[1, 0]
        s = cmath.sqrt(tr * tr - 4 * det)
        return max(abs((tr + s) / 2), abs((tr - s) / 2))
    if d <= 4:
        return max(abs(z) for z in _durand_kerner(_char_poly(K)))
    # power iteration, adequate for the non-negative next-generation matrix
    v = np.ones(d) / np.sqrt(d)
    lam = 0.0
    for _ in range(10000):
        w = K @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v, lam_old = w / nw, lam
        lam = nw
        if abs(lam - lam_old) <= 1e-14 * lam:
            break
    return float(lam)


def r0(model: OdeModel, disease_states: Sequence[str], params: Mapping | None = None,
       symbolic: bool | None = None):
    """Basic reproduction number.

    Symbolic (an Expr) when parameter values are unavailable or
    ``symbolic=True``; otherwise a float evaluated at ``params`` merged over
    the values attached to the model.
    """
    F, V, _ = next_generation(model, disease_states)
    d = len(F)
    values = dict(model.parameters)
    values.update(params or {})
    have_all = all(p in values for p in model.params)
    if symbolic is None:
        symbolic = not have_all
    if symbolic:
        if d > 2:
            raise ModelError("symbolic R0 is limited to two disease states")
        return _symbolic_radius(_matmul(F, _inverse_small(V)))
    if not have_all:
        raise ModelError(f"parameter values missing for {[p for p in model.params if p not in values]}")
    Fn = np.array([[ex.evaluate(e, values) for e in row] for row in F])
    Vn = np.array([[ex.evaluate(e, values) for e in row] for row in V])
    if np.linalg.cond(Vn) > 1e14:
        raise SingularMatrixError("V is singular at the disease-free equilibrium")
    return spectral_radius(Fn @ np.linalg.inv(Vn))
