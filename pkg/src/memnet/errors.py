"""Exception types shared across the simulator."""


class SimulatorError(Exception):
    """Base class for all simulator-specific failures."""


class MeshError(SimulatorError):
    """Invalid domain description or mesh construction request."""


class SolverError(SimulatorError):
    """A linear solve failed or left a residual above tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularOperatorError(SolverError):
    """Operator assembly would produce a singular system."""


class GummelMaxIterError(SolverError):
    """Self-consistency loop exhausted its iteration budget.

    Usually a sign that the time step is too large for the applied bias.
    """

    def __init__(self, message, residual, iterations):
        super().__init__(message, residual=residual)
        self.iterations = iterations


class NetlistError(SimulatorError):
    """Netlist text could not be parsed or is structurally invalid."""

    def __init__(self, message, line=None, column=None):
        if line is not None and column is not None:
            message = f"line {line}, column {column}: {message}"
        elif line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class ConfigError(SimulatorError):
    """Device or run configuration is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StepError(SimulatorError):
    """A transient step failed; carries the step index and a state snapshot."""

    def __init__(self, step, t, snapshot, cause):
        super().__init__(
            f"step {step} (t={t:g}) aborted: {cause}; state: {snapshot}"
        )
        self.step = step
        self.t = t
        self.snapshot = snapshot


class TopologyError(SimulatorError):
    """Network topology violates an index-1 condition."""


class SingularSystemError(SimulatorError):
    """The decoupling matrix E - A@Q is singular."""


class ConsistencyError(SimulatorError):
    """Initial network state violates the algebraic constraint."""
