import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Sequence

logger = logging.getLogger(__name__)

# replications handed to a worker process at a time
CHUNK_SIZE = 32

def _run_chunk(func: Callable, chunk: Sequence[tuple]) -> List[Any]:
    return [func(*task) for task in chunk]

async def _gather(func: Callable, tasks: Sequence[tuple], workers: int) -> List[Any]:
    loop = asyncio.get_running_loop()
    chunks = [tasks[i:i + CHUNK_SIZE] for i in range(0, len(tasks), CHUNK_SIZE)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, _run_chunk, func, chunk) for chunk in chunks]
        # gather keeps submission order, so results line up with replication indices
        results = await asyncio.gather(*futures)
    return [item for chunk in results for item in chunk]

def run_replications(func: Callable, tasks: Sequence[tuple], workers: int = 1) -> List[Any]:
    """Call func(*task) for every task and return the results in task order.

    func must be a module-level function so worker processes can import it.
    Each task carries its own random stream, so the outcome does not depend on
    the number of workers.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= CHUNK_SIZE:
        return _run_chunk(func, tasks)
    logger.debug(f"Running {len(tasks)} replications of {func.__name__} on {workers} workers")
    return asyncio.run(_gather(func, tasks, workers))
