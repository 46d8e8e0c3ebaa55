"""Exception hierarchy.  Each family carries the CLI exit code it maps to."""


class HexcubeError(Exception):
    exit_code = 1

    def __init__(self, message, stage=None, **diagnostics):
        super().__init__(message)
        self.stage = stage
        self.diagnostics = diagnostics

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            msg = f"[{self.stage}] {msg}"
        return msg


# exit code 2: input parsing and topology
class InputError(HexcubeError):
    exit_code = 2


class ParseError(InputError):
    pass


class TopologyError(InputError):
    pass


class DegenerateGeometry(InputError):
    pass


class ResolutionTooHigh(InputError):
    pass


class NonWatertight(InputError):
    pass


class EmptyVolume(InputError):
    pass


class EmptyInterface(InputError):
    pass


class ShellCountMismatch(InputError):
    pass


# exit code 3: linear algebra and convergence
class SolverError(HexcubeError):
    exit_code = 3


class SolverFailure(SolverError):
    pass


class NumericalDegeneracy(SolverError):
    pass


class IncompatibleRHS(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class DegenerateImage(SolverError):
    pass


class LocationFailure(SolverError):
    pass


# exit code 4: flows and map validity
class FlowError(HexcubeError):
    exit_code = 4


class FlipDetected(FlowError):
    pass


class InversionFailure(FlowError):
    pass


class InvertedCell(FlowError):
    pass


class BijectivityFailure(FlowError):
    pass


class OverlapError(FlowError):
    pass


class ZeroMeanVolume(FlowError):
    pass


# exit code 5: file output
class IoError(HexcubeError):
    exit_code = 5
