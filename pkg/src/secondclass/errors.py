"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class ConfigurationError(ValueError):
    """A parameter set violates one of its stated inequalities."""


class SingularConfigurationError(ArithmeticError):
    """Quadrature nodes landed on (or next to) a pole of the integrand."""
