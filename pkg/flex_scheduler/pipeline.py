import asyncio
import logging

from asgiref.sync import async_to_sync
from pydantic import ValidationError

from .exceptions import NextLogicBlock, UsageError
from .typing import Any, ClassVar, Command, DataDict, DataReturn, Optional, PipelineLogic, PipelinesDict
from .utils import is_pydantic_model, run_parallel

__all__ = [
    "BasePipeline",
]

logger = logging.getLogger(__name__)


class BasePipeline:
    pipelines: ClassVar[PipelinesDict] = {}
    """Dictionary describing the pipeline of each command."""

    def __init__(self, command: Command) -> None:
        self.command = command

    def process(self, data: DataDict) -> DataReturn:
        """Process command arguments in a pipeline-fashion."""
        return self.run_logic(logic=self.get_pipeline(), data=data)

    def get_pipeline(self) -> PipelineLogic:
        """Get pipeline for the current command."""
        try:
            return self.pipelines[self.command]
        except KeyError as missing_command:
            msg = f"Pipeline not configured for command '{self.command}'"
            raise KeyError(msg) from missing_command

    def run_logic(self, logic: PipelineLogic, data: DataDict) -> DataReturn:  # noqa: C901
        """Run pipeline logic recursively."""
        if callable(logic) and not is_pydantic_model(logic):
            logger.debug("%s: %s", self.command, getattr(logic, "__name__", logic))
            if asyncio.iscoroutinefunction(logic):
                logic = async_to_sync(logic)

            return logic(**data)

        try:
            for step in logic:
                # Conditional logic path
                if isinstance(data, tuple):
                    key, data = data
                    try:
                        step = step[key]  # noqa: PLW2901
                    except (KeyError, TypeError) as error:
                        msg = f"Next logic step doesn't have a conditional logic path '{key}'."
                        raise TypeError(msg) from error

                # Pydantic Model
                if is_pydantic_model(step):
                    data = self.run_model(model_class=step, data=data)

                # Parallel block
                elif isinstance(step, tuple):
                    old_kwargs: Optional[DataDict] = None
                    if ... in step:
                        step = tuple(task for task in step if task is not ...)  # noqa: PLW2901
                        old_kwargs = data

                    results: tuple[DataDict, ...] = async_to_sync(run_parallel)(step, data)
                    logger.debug("%s: ran %d steps in parallel", self.command, len(step))
                    data = {key: value for result in results for key, value in result.items()}

                    if old_kwargs is not None:
                        old_kwargs.update(data)
                        data = old_kwargs

                # Logic block or callable
                elif isinstance(step, list) or callable(step):
                    data = self.run_logic(logic=step, data=data if data is not None else {})

                else:
                    msg = "Only Pydantic Models and callables are supported in the pipeline."
                    raise TypeError(msg)

        except NextLogicBlock as premature_return:
            logger.debug("%s: left logic block early", self.command)
            return premature_return.output

        return data

    def run_model(self, model_class: Any, data: DataDict) -> DataDict:
        """Build and validate a pydantic model"""
        try:
            return model_class(**data).model_dump()
        except ValidationError as error:
            msg = f"Invalid arguments for '{self.command}': {error}"
            raise UsageError(msg) from error
