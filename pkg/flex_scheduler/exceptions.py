from .typing import Any, ClassVar, Optional

__all__ = [
    "ConfigurationError",
    "ContractViolation",
    "DataError",
    "DimensionError",
    "DomainError",
    "EmptyInputError",
    "EmptySupportError",
    "FlexSchedulerError",
    "InfeasibleFlexOfferError",
    "InsufficientDataError",
    "InvalidObservationError",
    "InvariantViolation",
    "MarketGapError",
    "NextLogicBlock",
    "NoFeasibleScheduleError",
    "OrderingError",
    "ParseError",
    "RangeError",
    "ReportIOError",
    "UsageError",
]


class NextLogicBlock(Exception):  # noqa: N818
    """
    Ends the current block of a command pipeline early, for example when no activation
    is forecast for the day. The keyword arguments become the input of the step after the block.
    """

    def __init__(self, **kwargs: Any) -> None:
        self.output = kwargs
        super().__init__()

    @classmethod
    def with_output(cls, output: Any) -> "NextLogicBlock":
        instance: NextLogicBlock = cls()
        instance.output = output
        return instance


class FlexSchedulerError(Exception):
    """Base for all errors raised by this package."""

    error_code: ClassVar[str] = "internal_error"
    exit_code: ClassVar[int] = 3


class UsageError(FlexSchedulerError):
    error_code = "usage_error"
    exit_code = 1


class DataError(FlexSchedulerError):
    """Input data or an output path could not be used."""

    error_code = "data_error"
    exit_code = 2


class ParseError(DataError):
    error_code = "parse_error"

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(DataError):
    error_code = "ordering_error"


class EmptyInputError(DataError):
    error_code = "empty_input"


class InsufficientDataError(DataError):
    error_code = "insufficient_data"


class MarketGapError(DataError):
    error_code = "market_gap"

    def __init__(self, missing_hour: str) -> None:
        self.missing_hour = missing_hour
        super().__init__(f"Market series is missing hour {missing_hour}.")


class RangeError(DataError):
    error_code = "range_error"


class InvalidObservationError(DataError):
    error_code = "invalid_observation"


class ConfigurationError(DataError):
    error_code = "configuration_error"


class ReportIOError(DataError):
    error_code = "io_error"


class InvariantViolation(FlexSchedulerError):
    """A precondition or invariant of the model was broken."""

    error_code = "invariant_violation"
    exit_code = 3


class InfeasibleFlexOfferError(InvariantViolation):
    error_code = "infeasible_flexoffer"


class EmptySupportError(InvariantViolation):
    error_code = "empty_support"


class DimensionError(InvariantViolation):
    error_code = "dimension_error"


class NoFeasibleScheduleError(InvariantViolation):
    error_code = "no_feasible_schedule"


class ContractViolation(InvariantViolation):
    error_code = "contract_violation"


class DomainError(InvariantViolation):
    error_code = "domain_error"
