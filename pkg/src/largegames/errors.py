"""Exception hierarchy shared by all modules."""


class LargeGamesError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(LargeGamesError, ValueError):
    """Malformed input: wrong shapes, mismatched spaces, bad indices."""


class DomainError(LargeGamesError, ValueError):
    """Well-formed input outside an operation's domain."""


class CapacityError(LargeGamesError, RuntimeError):
    """Exact computation would exceed the configured enumeration cap."""


class PayoffSyntaxError(LargeGamesError, ValueError):
    def __init__(self, message, line, column, text=None):
        self.message = message
        self.line = line
        self.column = column
        self.text = text
        super().__init__(f"{message} at line {line}, column {column}")


class BindError(LargeGamesError, ValueError):
    """A payoff expression does not fit the action space it is bound to."""

    def __init__(self, message, node=None, location=None):
        self.node = node
        self.location = location
        if location is not None:
            message = f"{message} (at line {location[0]}, column {location[1]})"
        super().__init__(message)


class EvaluationError(LargeGamesError, ArithmeticError):
    """Payoff evaluation hit an undefined operation."""

    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message)


class NEDPreconditionError(LargeGamesError, ValueError):
    """The characteristics marginal of a distribution does not match the game."""

    def __init__(self, message, characteristic=None):
        self.characteristic = characteristic
        super().__init__(message)


class ScenarioError(LargeGamesError, ValueError):
    """Invalid scenario file; carries the offending field path and line."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where += f" [{field}]"
        if line is not None:
            where += f" (line {line})"
        super().__init__(message + where)
