"""Exception hierarchy shared by all triline modules."""


class TrilineError(Exception):
    """Base class for every error raised by the package."""


class DegenerateGeometry(TrilineError):
    pass


class TopologyError(TrilineError):
    pass


class CurveTooShort(TrilineError):
    pass


class DegenerateJunction(TrilineError):
    pass


class NonPositiveDensity(TrilineError):
    pass


class TensionDepleted(TrilineError):
    pass


class ClosureSolveFailed(TrilineError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SlipDegenerate(TrilineError):
    pass


class StepRejected(TrilineError):
    def __init__(self, message, dt_max):
        super().__init__(message)
        self.dt_max = dt_max


class IllPosedCase(TrilineError):
    pass


class ParseError(TrilineError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(TrilineError):
    """Carries every problem found, not just the first."""

    def __init__(self, problems):
        # problems: list of (field, reason)
        if isinstance(problems, tuple):
            problems = [problems]
        self.problems = list(problems)
        text = "; ".join(f"{f}: {r}" for f, r in self.problems)
        super().__init__(text)

    @property
    def fields(self):
        return [f for f, _ in self.problems]
