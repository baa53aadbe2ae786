"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class BoltzgenError(Exception):
    exit_code = 1


class SpecError(BoltzgenError):
    """Malformed or ill-founded specification."""

    exit_code = 2


class UnresolvedReference(SpecError, NameError):
    def __init__(self, name, where=None):
        self.name = name
        self.where = where
        msg = f"unresolved class reference {name!r}"
        if where is not None:
            msg += f" in definition of {where!r}"
        super().__init__(msg)


class ValidationError(SpecError):
    def __init__(self, report):
        self.report = report
        reasons = "; ".join(f"{c}: {r}" for c, r in report.diagnostics)
        super().__init__(f"specification is not well-founded: {reasons}")


class ModeError(SpecError):
    pass


class ParameterError(BoltzgenError):
    """Parameter outside the convergence domain, or no solution exists."""

    exit_code = 3


class DivergenceError(ParameterError):
    pass


class NeedMoreTerms(ParameterError):
    pass


class ResourceError(BoltzgenError):
    """A trial, memory, or recursion cap was hit."""

    exit_code = 4


class InternalError(BoltzgenError):
    exit_code = 1
