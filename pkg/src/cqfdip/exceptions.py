"""Exception hierarchy shared by all cqfdip modules."""


class CqfDipError(Exception):
    """Base class for errors raised by this package."""


class ParseError(CqfDipError, ValueError):
    """A text input (topology, timing, flow or config file) is malformed."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:"
            if lineno is not None:
                where += f"{lineno}:"
            where += " "
        super().__init__(where + message)


class TopologyError(CqfDipError, ValueError):
    """The network graph violates one or more structural invariants."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class HypercycleError(CqfDipError, ValueError):
    pass


class AlignmentError(CqfDipError, ValueError):
    pass


class FlowError(CqfDipError, ValueError):
    pass


class SchedulingError(CqfDipError, ValueError):
    pass


class SimulationError(CqfDipError, RuntimeError):
    pass
