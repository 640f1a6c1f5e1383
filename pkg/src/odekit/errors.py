"""Exception hierarchy shared by every odekit module."""


class OdekitError(Exception):
    """Base class for all errors raised by odekit."""


class ExprSyntaxError(OdekitError, ValueError):
    def __init__(self, message, position=None, source=None):
        self.position = position
        self.source = source
        if position is not None:
            message = f"{message} at position {position}"
            if source is not None:
                message += f"\n  {source}\n  {' ' * position}^"
        super().__init__(message)


class UnknownSymbolError(OdekitError, KeyError):
    def __init__(self, name, message=None):
        self.name = name
        super().__init__(message or f"unknown symbol {name!r}")

    def __str__(self):
        return self.args[0]


class MissingBindingError(OdekitError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"no value bound for symbol {name!r}")

    def __str__(self):
        return self.args[0]


class DomainError(OdekitError, ArithmeticError):
    """Division by zero, log of a non-positive number and similar."""


class ModelError(OdekitError, ValueError):
    """Ill-formed model: wrongly typed transitions, duplicates, no dynamics."""


class UnrollAmbiguityError(ModelError):
    def __init__(self, term, candidates=()):
        self.term = term
        self.candidates = list(candidates)
        if self.candidates:
            super().__init__(
                f"term {term} matches positive terms in several states: "
                + ", ".join(self.candidates))
        else:
            super().__init__(str(term))


class IntegrationError(OdekitError, RuntimeError):
    def __init__(self, message, t=None, state=None):
        self.t = t
        self.state = state
        if t is not None:
            message = f"{message} (t={t!r}, state={list(state) if state is not None else None})"
        super().__init__(message)


class SimulationError(OdekitError, RuntimeError):
    pass


class EstimationError(OdekitError, RuntimeError):
    pass


class SingularMatrixError(OdekitError, ArithmeticError):
    pass


class SchemaError(OdekitError, ValueError):
    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
