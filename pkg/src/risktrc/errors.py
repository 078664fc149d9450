"""Exception types raised by the solvers and model tooling."""

from __future__ import annotations


class RiskTrcError(Exception):
    """Base class for all package errors."""


class InvalidModelError(RiskTrcError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"invalid model:\n{lines}")


class ModelFormatError(RiskTrcError):
    """Raised when a model file cannot be parsed. Carries the 1-based line when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class UnboundedRiskError(RiskTrcError):
    """An exponentiated reward exp(-beta * r) left the representable range."""

    def __init__(self, state: int, action: int, next_state: int, exponent: float):
        self.state = state
        self.action = action
        self.next_state = next_state
        self.exponent = exponent
        super().__init__(
            f"exp(-beta*r) overflows at (s={state}, a={action}, s'={next_state}): "
            f"exponent {exponent:.6g} exceeds the safe limit"
        )


class UnboundedPolicyError(RiskTrcError):
    """The exponential matrix of a policy has spectral radius >= 1."""

    def __init__(self, radius: float, policy=None):
        self.radius = radius
        self.policy = policy
        super().__init__(f"policy has unbounded ERM return: rho(B) ~ {radius:.12g} >= 1")


class SingularSystemError(RiskTrcError):
    pass


class SpectralConvergenceError(RiskTrcError):
    def __init__(self, lower: float, upper: float, iterations: int):
        self.lower = lower
        self.upper = upper
        self.iterations = iterations
        super().__init__(
            f"power iteration did not converge after {iterations} iterations; "
            f"spectral radius bracketed in [{lower!r}, {upper!r}]"
        )


class BudgetExceededError(RiskTrcError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"{count} deterministic policies exceed the enumeration cap {cap}; "
            "check individual policies instead"
        )


class IterationCapError(RiskTrcError):
    pass


class BetaGridError(RiskTrcError):
    pass


class NotTransientError(RiskTrcError):
    """A solve produced a state value of +inf, which only happens when the
    model admits a policy that never terminates."""
