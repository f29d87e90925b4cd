"""Exception types shared across the package."""


class CoadError(Exception):
    """Base class for all coad-specific errors."""


class DegenerateRates(CoadError):
    """A mean prediction rate equals 1, so the disagreement estimate divides by zero."""


class ConstraintViolation(CoadError):
    """The minority-class constraint (mean rates at or below 0.5) is violated."""


class NoFeasiblePair(CoadError):
    """Every threshold pair in the scan grid was rejected by the rate constraint."""


class ScenarioInvalid(CoadError):
    """An overlap scenario fails one of the required geometry conditions."""

    def __init__(self, condition: str, message: str = ""):
        self.condition = condition
        super().__init__(f"invalid scenario [{condition}]" + (f": {message}" if message else ""))


class NoFlip(CoadError):
    """The noisy s-side set is empty, so there is no labeling flip to locate."""


class TrainingDiverged(CoadError):
    """Loss became non-finite during gradient training."""
