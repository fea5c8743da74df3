"""Exception types raised across rrtlab."""


class ContractError(ValueError):
    """A precondition of a public operation was violated."""


class ScenarioParseError(ValueError):
    """Scenario text could not be parsed.

    ``field`` names the JSON field at fault (dotted path) and ``line`` is the
    1-based line in the source text, when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ScenarioValidationError(ValueError):
    """A parsed scenario violates one of its invariants."""


class RunError(RuntimeError):
    """A planner run could not be completed (e.g. a scripted sampler ran dry)."""


class ChainError(ValueError):
    """Covering-ball chain cannot be built for the given radius and clearance."""


class WindowError(ValueError):
    """Time windows would be empty for the requested sizes."""
