import asyncio
import hashlib
import json
import math
from functools import partial

import numpy as np
from asgiref.sync import async_to_sync
from pydantic import BaseModel

from .typing import Any, Callable, DataDict, Iterable, LogicCallable, Optional, TypeGuard, TypeVar

__all__ = [
    "config_digest",
    "derive_rng",
    "derive_seed",
    "is_pydantic_model",
    "round_floats",
    "run_parallel",
    "run_tasks",
]


T = TypeVar("T")

SIGNIFICANT_DIGITS = 9


def is_pydantic_model(obj: Any) -> TypeGuard[type[BaseModel]]:
    return isinstance(obj, type) and issubclass(obj, BaseModel)


def derive_seed(base_seed: int, *keys: int) -> int:
    """Derive an independent, reproducible seed from a base seed and integer keys."""
    sequence = np.random.SeedSequence([base_seed, *keys])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def derive_rng(base_seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, *keys]))


def round_floats(obj: Any, digits: int = SIGNIFICANT_DIGITS) -> Any:
    """Round every float in a nested structure to a fixed number of significant digits."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(key): round_floats(value, digits) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(value, digits) for value in obj]
    return obj


def config_digest(document: Any) -> str:
    """Stable short digest of a JSON-compatible document."""
    if isinstance(document, BaseModel):
        document = document.model_dump(mode="json")
    payload = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


async def run_parallel(
    step: Iterable[LogicCallable],
    data: DataDict,
    workers: Optional[int] = None,
) -> tuple[Any, ...]:
    """Run every callable of a step with the same data. Results keep the order of the step."""
    semaphore = asyncio.Semaphore(workers) if workers else None

    async def run_one(task: LogicCallable) -> Any:
        if semaphore is None:
            return await _call(task, data)
        async with semaphore:
            return await _call(task, data)

    return tuple(await asyncio.gather(*(run_one(task) for task in step)))


async def _call(task: LogicCallable, data: DataDict) -> Any:
    if asyncio.iscoroutinefunction(task):
        return await task(**data)
    return await asyncio.to_thread(partial(task, **data))


def run_tasks(tasks: list[Callable[[], T]], workers: int = 1) -> list[T]:
    """
    Run independent zero-argument tasks and return their results in submission order.
    With one worker the tasks run sequentially in the calling thread.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]

    results: tuple[T, ...] = async_to_sync(run_parallel)(tasks, {}, workers)
    return list(results)
