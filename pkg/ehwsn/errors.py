# exceptions raised by ehwsn, each with a machine readable category and CLI exit code


class EhwsnError(Exception):
    """
    Base class of all ehwsn errors.
    """
    category = "error"
    exit_code = 1


class ConfigError(EhwsnError, ValueError):
    category = "config"
    exit_code = 2


class TopologyError(EhwsnError, ValueError):
    category = "topology"
    exit_code = 3

    def __init__(self, message, link=None):
        """
        Raised when a topology violates the tree / energy link invariants.

        :param message: str, description of the problem
        :param link: tuple (i, j) with the offending link, if one can be named
        """
        if link is not None:
            message = f"{message} (link {link[0]}->{link[1]})"
        super().__init__(message)
        self.link = link


class InfeasibleProblemError(EhwsnError):
    category = "infeasible"
    exit_code = 4

    def __init__(self, message, report=None):
        """
        Raised when a slot problem has no strictly feasible point.

        :param message: str, description of the problem
        :param report: FeasibilityReport with the reasons, if available
        """
        super().__init__(message)
        self.report = report


class RateInfeasibleError(InfeasibleProblemError):

    def __init__(self, message, spectral_radius=None, report=None):
        super().__init__(message, report=report)
        self.spectral_radius = spectral_radius


class ConvergenceError(EhwsnError):
    category = "convergence"
    exit_code = 5

    def __init__(self, message, iterate=None):
        """
        Raised when the barrier method does not reach its tolerance.

        :param message: str, description of the problem
        :param iterate: last iterate of the solver (log-powers followed by transfers)
        """
        super().__init__(message)
        self.iterate = iterate


class CapacityViolationError(EhwsnError, ValueError):
    category = "capacity"
    exit_code = 6

    def __init__(self, link, flow, capacity):
        super().__init__(
            f"Flow {flow:.6g} on link {link} does not fit in capacity {capacity:.6g}"
        )
        self.link = link
        self.flow = flow
        self.capacity = capacity


class DimensionError(EhwsnError, ValueError):
    category = "dimension"
    exit_code = 7


class ResultIOError(EhwsnError, IOError):
    category = "io"
    exit_code = 8

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{message}: {path}"
        super().__init__(message)
        self.path = path
