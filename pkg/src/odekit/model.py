"""ODE systems assembled from typed transitions.

A model is declared from state names, parameter names and three lists of
:class:`Transition` objects: flows between states (type ``T``), explicit
right-hand sides (type ``ODE``) and birth/death processes (types ``B`` and
``D``).  At build time the right-hand side, its Jacobian with respect to the
states and its gradient with respect to the parameters are derived
symbolically and frozen.  Parameter values and the initial condition are
attached afterwards and may be changed freely.
"""
from __future__ import annotations

import enum
from collections import Counter
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import DomainError, MissingBindingError, ModelError, UnrollAmbiguityError
from .expr import Expr, SymbolTable


class TransitionType(str, enum.Enum):
    T = "T"
    ODE = "ODE"
    B = "B"
    D = "D"

    def __str__(self):
        return self.value


def _as_type(value) -> TransitionType:
    if isinstance(value, TransitionType):
        return value
    try:
        return TransitionType(str(value).upper())
    except ValueError:
        raise ModelError(f"unknown transition type {value!r}") from None


def _as_names(value) -> tuple:
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,)
    return tuple(value)


class Transition:
    """A single process contributing to the right-hand side.

    ``origin`` and ``destination`` may each name several states; repeating
    a name raises its stoichiometric coefficient, so ``A + A -> B + C`` is
    ``Transition(["A", "A"], rate, "T", ["B", "C"])``.
    """

    def __init__(self, origin, equation, transition_type=TransitionType.ODE, destination=None):
        self.origin = _as_names(origin)
        self.destination = _as_names(destination)
        self.equation = equation
        self.transition_type = _as_type(transition_type)
        if not self.origin:
            raise ModelError("a transition needs an origin state")
        if self.transition_type is TransitionType.T:
            if not self.destination:
                raise ModelError(f"transition from {self.origin} of type T needs a destination")
            if set(self.origin) & set(self.destination):
                raise ModelError(f"origin {self.origin} and destination {self.destination} overlap")
        elif self.destination:
            raise ModelError(f"a {self.transition_type} transition cannot have a destination")

    @property
    def kind(self) -> TransitionType:
        return self.transition_type

    def rate(self, table: SymbolTable | None = None) -> Expr:
        return ex.parse(self.equation, table) if isinstance(self.equation, str) else ex.as_expr(self.equation)

    def stoichiometry(self) -> Counter:
        """Net change per state when this process fires once."""
        change = Counter()
        kind = self.transition_type
        for s in self.origin:
            change[s] += 1 if kind is TransitionType.B else -1
        for s in self.destination:
            change[s] += 1
        return change

    def __repr__(self):
        dest = f", destination={list(self.destination)}" if self.destination else ""
        orig = self.origin[0] if len(self.origin) == 1 else list(self.origin)
        return f"Transition({orig!r}, {str(self.equation)!r}, {self.transition_type.value!r}{dest})"

    def __eq__(self, other):
        return (isinstance(other, Transition) and self.origin == other.origin
                and self.destination == other.destination
                and self.transition_type == other.transition_type
                and str(self.equation) == str(other.equation))

    __hash__ = None


class OdeModel:
    """Compiled ODE system ``dx/dt = f(x, t; theta)``.

    Parameters
    ----------
    states, params : sequence of str
        Declaration order fixes the order of every vector and matrix.
    transition : list of Transition
        Flows between states, type ``T`` only.
    ode : list of Transition
        Explicit equations, type ``ODE`` only, at most one per state.
    birth_death : list of Transition
        Birth (``B``) and death (``D``) processes.
    """

    def __init__(self, states, params=(), transition=(), ode=(), birth_death=()):
        self.table = SymbolTable(states, params)
        self.transitions = list(transition or ())
        self.odes = list(ode or ())
        self.birth_death = list(birth_death or ())
        if not (self.transitions or self.odes or self.birth_death):
            raise ModelError("model has no dynamics: all transition lists are empty")
        self._check_kinds()
        self._rates = {}
        self.rhs = self._assemble()
        n = len(self.states)
        self.jacobian = tuple(
            tuple(ex.differentiate(self.rhs[i], s) for s in self.states) for i in range(n))
        self.grad = tuple(
            tuple(ex.differentiate(self.rhs[i], p) for p in self.params) for i in range(n))
        self._param_values: dict = {}
        self._initial = None
        self._factories: dict = {}
        self._numeric_cache = None

    # -- construction ----------------------------------------------------

    @property
    def states(self) -> tuple:
        return self.table.states

    @property
    def params(self) -> tuple:
        return self.table.params

    @property
    def num_state(self) -> int:
        return len(self.table.states)

    @property
    def num_param(self) -> int:
        return len(self.table.params)

    def _check_kinds(self):
        lists = (
            ("transition", self.transitions, {TransitionType.T}),
            ("ode", self.odes, {TransitionType.ODE}),
            ("birth_death", self.birth_death, {TransitionType.B, TransitionType.D}),
        )
        for arg, items, allowed in lists:
            for tr in items:
                if not isinstance(tr, Transition):
                    raise ModelError(f"{arg} list holds {tr!r}, not a Transition")
                if tr.transition_type not in allowed:
                    raise ModelError(
                        f"wrongly typed transition in argument list {arg!r}: "
                        f"{tr!r} has type {tr.transition_type.value}")
                for s in tr.origin + tr.destination:
                    if s not in self.table.states:
                        raise ModelError(f"{tr!r} refers to unknown state {s!r}")

    def _assemble(self) -> tuple:
        contrib = {s: [] for s in self.states}
        seen_ode = set()
        for tr in self.odes:
            state = tr.origin[0]
            if len(tr.origin) != 1:
                raise ModelError(f"ODE transition must name exactly one state, got {tr.origin}")
            if state in seen_ode:
                raise ModelError(f"duplicate ODE equation for state {state!r}")
            seen_ode.add(state)
            contrib[state].append(self._rate(tr))
        for tr in self.transitions + self.birth_death:
            rate = self._rate(tr)
            if ex.TIME in ex.free_symbols(rate):
                raise ModelError(
                    f"{tr!r}: time-dependent rates are only allowed for ODE transitions")
            for s, k in tr.stoichiometry().items():
                if k:
                    contrib[s].append(ex.mul(ex.const(k), rate))
        return tuple(ex.add(*contrib[s]) for s in self.states)

    def _rate(self, tr: Transition) -> Expr:
        key = id(tr)
        if key not in self._rates:
            self._rates[key] = tr.rate(self.table)
        return self._rates[key]

    @property
    def jump_channels(self) -> list:
        """Transitions usable as jump channels: all ``T``, ``B`` and ``D``."""
        return self.transitions + self.birth_death

    @property
    def is_transition_form(self) -> bool:
        return not self.odes

    def stoichiometry(self) -> np.ndarray:
        """Integer matrix ``(#states, #channels)`` of state changes per event."""
        if not self.is_transition_form:
            raise ModelError("stoichiometry is only defined for models built from T/B/D transitions;"
                             " unroll the model first")
        chans = self.jump_channels
        v = np.zeros((self.num_state, len(chans)), dtype=np.int64)
        index = {s: i for i, s in enumerate(self.states)}
        for j, tr in enumerate(chans):
            for s, k in tr.stoichiometry().items():
                v[index[s], j] = k
        return v

    def channel_rates(self) -> list:
        return [self._rate(tr) for tr in self.jump_channels]

    # -- symbolic views --------------------------------------------------

    def get_ode_eqn(self) -> tuple:
        return self.rhs

    def get_jacobian_eqn(self) -> tuple:
        return self.jacobian

    def get_grad_eqn(self) -> tuple:
        return self.grad

    def linear_ode(self) -> bool:
        """True iff every second state derivative of the rhs vanishes."""
        for row in self.jacobian:
            for entry in row:
                for s in self.states:
                    if not ex.is_zero(ex.differentiate(entry, s)):
                        return False
        return True

    is_linear = linear_ode

    def print_ode(self, latex_output: bool = False) -> str:
        lines = []
        for s, f in zip(self.states, self.rhs):
            if latex_output:
                lines.append(f"\\frac{{d{ex.latex_symbol(s)}}}{{dt}} &= {ex.to_latex(f)}")
            else:
                lines.append(f"{s}' = {f}")
        if latex_output:
            return "\\begin{align*}\n" + " \\\\\n".join(lines) + "\n\\end{align*}"
        return "\n".join(lines)

    def __repr__(self):
        return (f"OdeModel(states={list(self.states)}, params={list(self.params)}, "
                f"transitions={len(self.transitions)}, odes={len(self.odes)}, "
                f"birth_death={len(self.birth_death)})")

    # -- numeric bindings ------------------------------------------------

    @property
    def parameters(self) -> dict:
        return dict(self._param_values)

    @parameters.setter
    def parameters(self, values):
        # partial assignments update, as when new birth/death rates are added
        merged = dict(self._param_values)
        merged.update(self._coerce_params(values))
        self._param_values = merged
        self._numeric_cache = None

    def _coerce_params(self, values) -> dict:
        if values is None:
            return {}
        if isinstance(values, Mapping):
            items = list(values.items())
        else:
            values = list(values)
            if values and isinstance(values[0], (tuple, list)) and len(values[0]) == 2 \
                    and isinstance(values[0][0], str):
                items = [tuple(v) for v in values]
            else:
                if len(values) != self.num_param:
                    raise ModelError(
                        f"expected {self.num_param} parameter values, got {len(values)}")
                items = list(zip(self.params, values))
        out = {}
        for name, v in items:
            name = str(name)
            if name not in self.params:
                raise ModelError(f"unknown parameter {name!r}")
            out[name] = float(v)
        return out

    def parameter_vector(self) -> np.ndarray:
        try:
            return np.array([self._param_values[p] for p in self.params], dtype=float)
        except KeyError as exc:
            raise MissingBindingError(exc.args[0]) from None

    @property
    def initial_values(self):
        return self._initial

    @initial_values.setter
    def initial_values(self, value):
        x0, t0 = value
        if isinstance(x0, Mapping):
            x0 = [x0[s] for s in self.states]
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.num_state,):
            raise ModelError(f"initial state must have {self.num_state} entries, got {x0.shape}")
        self._initial = (x0, float(t0))

    def copy(self) -> "OdeModel":
        m = OdeModel.__new__(OdeModel)
        m.__dict__.update(self.__dict__)
        m._param_values = dict(self._param_values)
        m._numeric_cache = None
        return m

    def _factory(self, which: str):
        if which not in self._factories:
            args = (ex.TIME,) + self.states
            if which == "rhs":
                exprs = self.rhs
            elif which == "jac":
                exprs = [e for row in self.jacobian for e in row]
            elif which == "grad":
                exprs = [e for row in self.grad for e in row]
            elif which == "fjg":
                exprs = (list(self.rhs) + [e for row in self.jacobian for e in row]
                         + [e for row in self.grad for e in row])
            elif which == "rates":
                exprs = self.channel_rates()
            else:
                raise KeyError(which)
            self._factories[which] = ex.compile_factory(exprs, self.params, args)
        return self._factories[which]

    def numeric(self, params=None) -> "NumericOde":
        """Numeric callbacks bound to ``params`` (defaults to the attached values)."""
        if params is None:
            if self._numeric_cache is None:
                self._numeric_cache = NumericOde(self, self.parameter_vector())
            return self._numeric_cache
        if isinstance(params, Mapping):
            merged = dict(self._param_values)
            merged.update({k: float(v) for k, v in params.items()})
            missing = [p for p in self.params if p not in merged]
            if missing:
                raise MissingBindingError(missing[0])
            params = [merged[p] for p in self.params]
        return NumericOde(self, np.asarray(params, dtype=float))

    # exposed callbacks, (x, t) order plus the T-suffixed (t, x) twins
    def ode(self, x, t):
        return self.numeric().f(t, x)

    def odeT(self, t, x):
        return self.numeric().f(t, x)

    def jacobian_at(self, x, t):
        return self.numeric().jac(t, x)

    def jacobianT(self, t, x):
        return self.numeric().jac(t, x)

    def grad_at(self, x, t):
        return self.numeric().grad(t, x)

    def gradT(self, t, x):
        return self.numeric().grad(t, x)

    def integrate(self, times, config=None):
        from .integrate import integrate
        return integrate(self, times, config)

    # -- structural transforms -------------------------------------------

    def get_unrolled_obj(self) -> "OdeModel":
        return unroll(self)

    def add_birth_death(self, new_params: Iterable[str], processes: Sequence[Transition]) -> "OdeModel":
        return add_birth_death(self, new_params, processes)


def _call(fn, t, x):
    try:
        return fn(float(t), *np.asarray(x, dtype=float).tolist())
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise DomainError(f"evaluation failed at t={t!r}: {exc}") from None


class NumericOde:
    """Right-hand side, Jacobian and parameter gradient at fixed parameters."""

    def __init__(self, model: OdeModel, params: np.ndarray):
        self.model = model
        self.params = np.asarray(params, dtype=float)
        if self.params.shape != (model.num_param,):
            raise ModelError(f"expected {model.num_param} parameter values, got {self.params.shape}")
        vals = self.params.tolist()
        self.n = model.num_state
        self.p = model.num_param
        self._f = model._factory("rhs")(*vals)
        self._j = model._factory("jac")(*vals)
        self._g = model._factory("grad")(*vals)
        self._fjg = model._factory("fjg")(*vals)

    def f(self, t, x) -> np.ndarray:
        return np.array(_call(self._f, t, x))

    def jac(self, t, x) -> np.ndarray:
        return np.array(_call(self._j, t, x)).reshape(self.n, self.n)

    def grad(self, t, x) -> np.ndarray:
        return np.array(_call(self._g, t, x)).reshape(self.n, self.p)

    def fjg(self, t, x):
        """Right-hand side, Jacobian and parameter gradient in one call."""
        v = np.array(_call(self._fjg, t, x))
        n, p = self.n, self.p
        return v[:n], v[n:n + n * n].reshape(n, n), v[n + n * n:].reshape(n, p)


def build(table: SymbolTable, transitions=(), odes=(), birth_death=()) -> OdeModel:
    return OdeModel(table.states, table.params, transition=transitions, ode=odes,
                    birth_death=birth_death)


def ode_equations(m: OdeModel) -> tuple:
    return m.rhs


def jacobian_equations(m: OdeModel) -> tuple:
    return m.jacobian


def grad_equations(m: OdeModel) -> tuple:
    return m.grad


def is_linear(m: OdeModel) -> bool:
    return m.linear_ode()


def _carry_bindings(src: OdeModel, dst: OdeModel) -> OdeModel:
    dst._param_values = {k: v for k, v in src._param_values.items() if k in dst.params}
    dst._initial = src._initial
    return dst


def unroll(m: OdeModel) -> OdeModel:
    """Decompose the right-hand side into transitions and birth/death terms.

    Every rhs row is expanded into signed monomials.  A negative monomial in
    state ``i`` that equals a positive monomial in exactly one other state
    ``j`` becomes a flow ``i -> j``; remaining positive monomials become
    births and remaining negative monomials deaths.
    """
    terms = []
    for i, f in enumerate(m.rhs):
        row = []
        for st in ex.expand_to_terms(f):
            row.append([st, ex.term_key(st.term), False])
        terms.append(row)

    flows, bd = [], []
    for i, row in enumerate(terms):
        for entry in row:
            st, key, used = entry
            if used or st.sign > 0:
                continue
            cands = []
            for j, other in enumerate(terms):
                if j == i:
                    continue
                for cand in other:
                    if not cand[2] and cand[0].sign > 0 and cand[1] == key:
                        cands.append((j, cand))
            if len(cands) > 1:
                raise UnrollAmbiguityError(st.term, [m.states[j] for j, _ in cands])
            if cands:
                j, cand = cands[0]
                entry[2] = cand[2] = True
                flows.append(Transition(m.states[i], st.term, TransitionType.T, m.states[j]))
    for i, row in enumerate(terms):
        for st, _, used in row:
            if used:
                continue
            kind = TransitionType.B if st.sign > 0 else TransitionType.D
            bd.append(Transition(m.states[i], st.term, kind))
    if not flows and not bd:
        # x' = 0 everywhere: keep the system representable
        return _carry_bindings(m, OdeModel(m.states, m.params, ode=[
            Transition(s, ex.ZERO, TransitionType.ODE) for s in m.states]))
    out = OdeModel(m.states, m.params, transition=flows, birth_death=bd)
    return _carry_bindings(m, out)


def add_birth_death(m: OdeModel, new_params: Iterable[str], processes: Sequence[Transition]) -> OdeModel:
    """Return a copy of ``m`` with extra parameters and birth/death processes."""
    for tr in processes:
        if tr.transition_type not in (TransitionType.B, TransitionType.D):
            raise ModelError(f"wrongly typed transition in argument list 'birth_death': {tr!r}")
    params = list(m.params) + [p for p in new_params if p not in m.params]
    out = OdeModel(m.states, params, transition=m.transitions, ode=m.odes,
                   birth_death=list(m.birth_death) + list(processes))
    return _carry_bindings(m, out)
