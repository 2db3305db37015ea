"""Exception hierarchy shared by the engines, fits and the command line."""


class OptobaeError(Exception):
    """Base class for all package errors."""


class ConfigError(OptobaeError, ValueError):
    """One or more parameter invariants were violated.

    All violations found are collected in ``problems`` so that a config
    file can be fixed in one pass.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DomainError(OptobaeError, ValueError):
    """A derived quantity is undefined for the given inputs."""


class InstabilityError(OptobaeError, ArithmeticError):
    """The linearized dynamics are unstable or the response is singular."""

    def __init__(self, message, omega=None, condition=None, eigenvalue=None):
        super().__init__(message)
        self.omega = omega
        self.condition = condition
        self.eigenvalue = eigenvalue


class FitError(OptobaeError, RuntimeError):
    """A fit could not be set up or did not converge."""


class StatisticsError(OptobaeError, ValueError):
    """Too little data for a trustworthy spectral estimate."""


class ParseError(OptobaeError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
