"""Exception hierarchy shared by all modules."""


class GeoPressureError(Exception):
    """Base class; ``code`` is the machine-readable id written to run summaries."""

    code = "error"


class PoleError(GeoPressureError, ZeroDivisionError):
    code = "pole"


class ConvergenceError(GeoPressureError, ArithmeticError):
    code = "non_convergence"

    def __init__(self, message, residual=None, last=None):
        super().__init__(message)
        self.residual = residual
        self.last = last


class BranchAmbiguityError(GeoPressureError):
    code = "branch_ambiguity"


class MarkovError(GeoPressureError):
    code = "markov_failure"


class BracketError(GeoPressureError, ValueError):
    code = "invalid_bracket"

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class NoSignChangeError(GeoPressureError, ValueError):
    code = "no_sign_change"


class BudgetError(GeoPressureError):
    code = "node_budget"


class ConfigError(GeoPressureError, ValueError):
    code = "config"


class DerivativeUnderflowError(GeoPressureError, ArithmeticError):
    code = "derivative_underflow"


class GeoPressureWarning(UserWarning):
    """Flags raised by estimators; the CLI collects them into run summaries."""
