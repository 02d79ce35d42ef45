"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures to distinct process statuses.
"""


class PlannerError(Exception):
    exit_code = 1


class DimensionError(PlannerError, ValueError):
    exit_code = 3


class EmptySet(PlannerError):
    exit_code = 4


class Unbounded(PlannerError):
    exit_code = 4


class NotPositiveDefinite(PlannerError, ValueError):
    exit_code = 4


class NoEquilibrium(PlannerError):
    exit_code = 5


class NoInteriorEquilibrium(NoEquilibrium):
    exit_code = 5


class NotStable(PlannerError):
    exit_code = 5


class SolverFailure(PlannerError):
    exit_code = 6

    def __init__(self, message, residual=None, iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class InfeasibleSample(PlannerError):
    exit_code = 7


class OutsideFreeSpace(PlannerError):
    exit_code = 8


class EmptyGrid(PlannerError):
    exit_code = 9


class EmptyGraph(PlannerError):
    exit_code = 9


class A1Violated(PlannerError):
    """No controller stabilizes an equilibrium at the target output."""

    exit_code = 11


class A2Violated(PlannerError):
    """The initial state lies in no controller's invariant set."""

    exit_code = 12


class A3Violated(PlannerError):
    """No graph path joins a start controller to a goal controller."""

    exit_code = 13


class Timeout(PlannerError):
    exit_code = 14

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ScenarioError(PlannerError):
    """Malformed scenario file; ``location`` names the offending field."""

    exit_code = 2

    def __init__(self, message, location=None):
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
        self.location = location
