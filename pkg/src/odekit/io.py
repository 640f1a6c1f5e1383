"""Model files, observation files and result serialisation.

Model files are YAML documents; see the README for the schema.  States and
parameters may be written as templates ``{names: [...], types: [...]}``
expanding to ``name_type`` in name-major order.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import expr as ex
from .distributions import GENERATORS, Distribution
from .errors import OdekitError, SchemaError
from .model import OdeModel, Transition, TransitionType

TOP_LEVEL = {"states", "params", "transitions", "parameters", "initial", "distributions"}
RECORD_FIELDS = {"origin", "destination", "equation", "type"}


# -- line tracking -----------------------------------------------------------

def _line_index(node, path=(), out=None) -> dict:
    """Map every path inside the YAML node tree to its 1-based line."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, message, *path):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        field = ".".join(str(p) for p in path) or None
        raise SchemaError(message, field=field, line=line)


# -- models ------------------------------------------------------------------

def expand_names(items, ctx: _Ctx, key: str) -> list:
    """Expand a list of names and ``{names, types}`` templates."""
    if not isinstance(items, list):
        ctx.fail(f"'{key}' must be a list", key)
    out = []
    for i, item in enumerate(items):
        if isinstance(item, str):
            out.append(item)
        elif isinstance(item, dict):
            if set(item) != {"names", "types"}:
                ctx.fail("a template needs exactly the keys 'names' and 'types'", key, i)
            names, types = item["names"], item["types"]
            if (not isinstance(names, list) or not isinstance(types, list) or not names or not types
                    or not all(isinstance(x, str) for x in names + types)):
                ctx.fail("template 'names' and 'types' must be non-empty lists of strings", key, i)
            out.extend(f"{n}_{t}" for n in names for t in types)
        else:
            ctx.fail(f"entries of '{key}' must be names or templates", key, i)
    return out


def model_from_dict(doc: Any, lines: dict | None = None) -> OdeModel:
    ctx = _Ctx(lines or {})
    if not isinstance(doc, dict):
        ctx.fail("a model file must be a mapping")
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        ctx.fail(f"unknown top-level keys {sorted(unknown)}", sorted(unknown)[0])
    if "states" not in doc:
        ctx.fail("missing 'states'")
    states = expand_names(doc["states"], ctx, "states")
    if not states:
        ctx.fail("'states' must not be empty", "states")
    params = expand_names(doc.get("params", []) or [], ctx, "params")
    records = doc.get("transitions")
    if not isinstance(records, list) or not records:
        ctx.fail("'transitions' must be a non-empty list", "transitions")
    lists = {TransitionType.T: [], TransitionType.ODE: [], TransitionType.B: [], TransitionType.D: []}
    try:
        table = ex.SymbolTable(states, params)
    except (OdekitError, ValueError) as exc:
        ctx.fail(str(exc), "states")
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            ctx.fail("a transition must be a mapping", "transitions", i)
        extra = set(rec) - RECORD_FIELDS
        if extra:
            ctx.fail(f"unknown transition fields {sorted(extra)}", "transitions", i, sorted(extra)[0])
        for req in ("origin", "equation"):
            if req not in rec:
                ctx.fail(f"transition is missing '{req}'", "transitions", i)
        eq = rec["equation"]
        if isinstance(eq, (int, float)) and not isinstance(eq, bool):
            eq = repr(eq)
        if not isinstance(eq, str):
            ctx.fail("'equation' must be a string", "transitions", i, "equation")
        try:
            ex.parse(eq, table)
        except (OdekitError, ValueError) as exc:
            ctx.fail(f"{type(exc).__name__}: {exc}", "transitions", i, "equation")
        try:
            kind = TransitionType(str(rec.get("type", "ODE")).upper())
        except ValueError:
            ctx.fail("'type' must be one of T, ODE, B, D", "transitions", i, "type")
        try:
            tr = Transition(rec["origin"], eq, kind, rec.get("destination"))
        except OdekitError as exc:
            ctx.fail(str(exc), "transitions", i)
        lists[kind].append(tr)
    try:
        model = OdeModel(states, params, transition=lists[TransitionType.T], ode=lists[TransitionType.ODE],
                         birth_death=lists[TransitionType.B] + lists[TransitionType.D])
    except OdekitError as exc:
        ctx.fail(f"{type(exc).__name__}: {exc}", "transitions")
    if "parameters" in doc:
        vals = doc["parameters"]
        if not isinstance(vals, dict):
            ctx.fail("'parameters' must map names to numbers", "parameters")
        for k, v in vals.items():
            if k not in model.params:
                ctx.fail(f"unknown parameter {k!r}", "parameters", k)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                ctx.fail("parameter values must be numbers", "parameters", k)
        model.parameters = {k: float(v) for k, v in vals.items()}
    if "initial" in doc:
        init = doc["initial"]
        if not isinstance(init, dict) or "values" not in init:
            ctx.fail("'initial' needs 'values' and optionally 't0'", "initial")
        values = init["values"]
        if isinstance(values, dict):
            missing = [s for s in states if s not in values]
            if missing or set(values) - set(states):
                ctx.fail(f"initial values must name every state exactly; missing {missing}", "initial", "values")
            values = [values[s] for s in states]
        if not isinstance(values, list) or len(values) != len(states):
            ctx.fail(f"initial values need {len(states)} entries", "initial", "values")
        try:
            model.initial_values = ([float(v) for v in values], float(init.get("t0", 0.0)))
        except (TypeError, ValueError):
            ctx.fail("initial values must be numbers", "initial")
    if "distributions" in doc:
        dists = doc["distributions"]
        if not isinstance(dists, dict):
            ctx.fail("'distributions' must map parameters to distributions", "distributions")
        parsed = {}
        for k, spec in dists.items():
            if k not in model.params:
                ctx.fail(f"unknown parameter {k!r}", "distributions", k)
            if not isinstance(spec, dict) or "family" not in spec:
                ctx.fail("a distribution needs a 'family'", "distributions", k)
            if spec["family"] not in GENERATORS:
                ctx.fail(f"unknown family {spec['family']!r}", "distributions", k, "family")
            try:
                parsed[k] = Distribution(spec["family"], {a: b for a, b in spec.items() if a != "family"})
            except (TypeError, ValueError) as exc:
                ctx.fail(f"bad distribution: {exc}", "distributions", k)
        model.distributions = parsed
    return model


def loads_model(text: str) -> OdeModel:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SchemaError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    if node is None:
        raise SchemaError("empty model file", line=1)
    return model_from_dict(doc, _line_index(node))


def load_model(path) -> OdeModel:
    return loads_model(Path(path).read_text())


def _eq_text(eq) -> str:
    return eq if isinstance(eq, str) else ex.to_string(ex.as_expr(eq))


def _names(names):
    return names[0] if len(names) == 1 else list(names)


def model_to_dict(model: OdeModel) -> dict:
    records = []
    for tr in model.transitions + model.odes + model.birth_death:
        rec = {"origin": _names(tr.origin)}
        if tr.destination:
            rec["destination"] = _names(tr.destination)
        rec["equation"] = _eq_text(tr.equation)
        rec["type"] = tr.transition_type.value
        records.append(rec)
    doc = {"states": list(model.states), "params": list(model.params), "transitions": records}
    if model.parameters:
        doc["parameters"] = {p: model.parameters[p] for p in model.params if p in model.parameters}
    if model.initial_values is not None:
        x0, t0 = model.initial_values
        doc["initial"] = {"values": [float(v) for v in x0], "t0": float(t0)}
    dists = getattr(model, "distributions", None)
    if dists:
        doc["distributions"] = {k: {"family": d.family, **dict(d.params)} for k, d in dists.items()}
    return doc


def dumps_model(model: OdeModel) -> str:
    return yaml.safe_dump(model_to_dict(model), sort_keys=False, default_flow_style=None)


def save_model(model: OdeModel, path) -> None:
    Path(path).write_text(dumps_model(model))


# -- observations ------------------------------------------------------------

def read_observations(path, states=None):
    """Read ``t`` plus state columns; returns ``(t, y, names)``.

    ``states`` picks (and orders) a subset of the columns.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError("observation file is empty", line=1)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise SchemaError("first column must be 't'", field="t", line=1)
    names = header[1:]
    if not names or len(set(names)) != len(names):
        raise SchemaError("need one or more distinct state columns after 't'", line=1)
    data = []
    for k, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise SchemaError(f"expected {len(header)} fields, got {len(row)}", line=k)
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise SchemaError("non-numeric field", line=k) from None
        if not all(math.isfinite(v) for v in vals):
            raise SchemaError("non-finite value", line=k)
        if data and vals[0] <= data[-1][0]:
            raise SchemaError("times must be strictly increasing", field="t", line=k)
        data.append(vals)
    if not data:
        raise SchemaError("observation file has no data rows", line=2)
    arr = np.array(data)
    t, y = arr[:, 0], arr[:, 1:]
    if states is not None:
        missing = [s for s in states if s not in names]
        if missing:
            raise SchemaError(f"observation file lacks columns {missing}", line=1)
        y = y[:, [names.index(s) for s in states]]
        names = list(states)
    return t, y, names


# -- results -----------------------------------------------------------------

def format_float(v) -> str:
    return repr(float(v))


def trajectory_csv(times, values, states) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *states])
    for t, row in zip(times, values):
        w.writerow([format_float(t), *(format_float(v) for v in row)])
    return buf.getvalue()


def write_trajectory(path, times, values, states) -> None:
    Path(path).write_text(trajectory_csv(times, values, states))


def to_json(doc) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.floating, np.integer, np.bool_)):
            return o.item()
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return json.dumps(doc, indent=2, default=default, allow_nan=True) + "\n"
