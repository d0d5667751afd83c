"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input document or configuration is malformed."""


class LayoutParseError(ValidationError):
    """A layout document could not be parsed.

    ``field`` names the offending key and ``line`` the 1-based line of the
    JSON syntax error, when known.
    """

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class DomainError(KeyError):
    """Unknown MDP state, action or reward-machine state."""

    def __str__(self):
        return str(self.args[0]) if self.args else "domain error"


class SolverError(RuntimeError):
    """A SAT backend failed (distinct from an UNSAT verdict)."""


class EncodingError(RuntimeError):
    """A SAT assignment violates the exactly-one structure of the encoding."""


class TractabilityError(ValueError):
    """An exhaustive oracle was asked to solve an instance beyond its guard."""
