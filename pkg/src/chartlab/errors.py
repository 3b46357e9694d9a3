"""Exception hierarchy shared across the toolkit.

DataError covers malformed inputs (bad shapes, bad files, invalid
parameters), NumericalError covers failures of numerical procedures
(divergence, failed calibration).  The CLI maps these onto exit codes.
"""


class ChartLabError(Exception):
    pass


class DataError(ChartLabError, ValueError):
    """Invalid input data or parameters."""


class NumericalError(ChartLabError, RuntimeError):
    """A numerical procedure failed (divergence, no bracket, ...)."""


class CalibrationError(NumericalError):
    """Automatic scale calibration failed; supply the value manually."""


class GraphDisconnectedError(NumericalError):
    """k-NN graph has more than one connected component."""

    def __init__(self, component_sizes):
        self.component_sizes = list(component_sizes)
        sizes = ", ".join(str(s) for s in self.component_sizes)
        super().__init__(
            f"k-NN graph is disconnected (component sizes: {sizes}); "
            "increase k or enable repair mode"
        )
