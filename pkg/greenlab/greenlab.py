"""Main greenlab file: the parallel engine shared by every per-point workload."""

import logging
import os
import sys
from itertools import count
from multiprocessing import Manager, Pool, cpu_count

import dill

from greenlab.errors import ConfigError
from greenlab.utils.progress_bars import ProgressBars
from greenlab.utils.tools import ERROR, PROGRESSION, VALUE
from greenlab.workloads.chain_sampler import ChainSampler
from greenlab.workloads.pair_blocks import PairBlocks
from greenlab.workloads.point_map import PointMap

logger = logging.getLogger(__name__)

ROOT_LOGGER = "greenlab"

# Caps the number of worker processes
THREADS_ENV = "GREENLAB_THREADS"

VERBOSITY_LEVELS = {0: logging.CRITICAL + 10, 1: logging.WARNING, 2: logging.INFO}


def default_nb_workers():
    """All available CPUs, capped by GREENLAB_THREADS when it is set."""
    nb_workers = cpu_count()
    cap = os.environ.get(THREADS_ENV)

    if cap is None or cap.strip() == "":
        return nb_workers

    try:
        cap = int(cap)
    except ValueError:
        raise ConfigError("{} must be an integer, got {!r}".format(THREADS_ENV, cap))

    if cap < 1:
        raise ConfigError("{} must be positive, got {}".format(THREADS_ENV, cap))

    return min(nb_workers, cap)


# The Pool initializer stores the worker once per process; `global_worker` is
# then a top-level function the pool can reference by name.
_func = None


def worker_init(func):
    global _func
    _func = func


def global_worker(x):
    return _func(x)


class WorkerWrapper:
    """This object runs on WORKERS.

    1. Undill the function to apply (so lambdas and closures survive)
    2. Apply the workload worker on its chunk
    3. Tell the MASTER the chunk is finished (or failed)
    """

    def __init__(self, function):
        self.function = function

    def __call__(self, worker_args):
        data, index, meta_args, queue, progress_bar, dilled_func, args, kwargs = (
            worker_args
        )

        try:
            result = self.function(
                data,
                index,
                meta_args,
                queue,
                progress_bar,
                dill.loads(dilled_func),
                *args,
                **kwargs
            )
            queue.put((VALUE, index))

            return result

        except Exception:
            queue.put((ERROR, index))
            raise


def get_workers_args(progress_bar, chunks, worker_meta_args, queue, func, args, kwargs):
    """This function is run on the MASTER.

    Pair every chunk with its index, the shared meta arguments, the message
    queue and the dilled function to apply.
    """
    dilled_func = dill.dumps(func)

    workers_args = [
        (chunk_, index, worker_meta_args, queue, progress_bar, dilled_func, args, kwargs)
        for index, chunk_ in enumerate(chunks)
    ]
    chunk_lengths = [len(chunk_) for chunk_ in chunks]

    return workers_args, chunk_lengths


def get_workers_result(nb_chunks, show_progress_bar, queue, chunk_lengths, map_result):
    """Wait for the workers result while eventually displaying progress bars."""
    if show_progress_bar:
        progress_bars = ProgressBars(chunk_lengths)
        progresses = [0] * nb_chunks

    finished_workers = [False] * nb_chunks
    generation = count()

    while not all(finished_workers):
        message_type, message = queue.get()

        if message_type == PROGRESSION:
            worker_index, progression = message
            progresses[worker_index] = progression

            if next(generation) % nb_chunks == 0:
                progress_bars.update(progresses)

        elif message_type == VALUE:
            worker_index = message
            finished_workers[worker_index] = VALUE

            if show_progress_bar:
                progresses[worker_index] = chunk_lengths[worker_index]
                progress_bars.update(progresses)

        elif message_type == ERROR:
            worker_index = message
            finished_workers[worker_index] = ERROR
            logger.warning("Worker %d failed", worker_index)

    if show_progress_bar:
        progress_bars.close()

    # Re-raises the worker exception, if any
    return map_result.get()


def parallelize(
    nb_workers,
    progress_bar,
    get_chunks,
    worker,
    reduce,
    get_worker_meta_args=lambda _: dict(),
    get_reduce_meta_args=lambda _: dict(),
):
    """Master function.
    1. Split data into chunks
    2. Send chunks to workers (or run them in-process with a single worker)
    3. Wait for the workers results (while displaying a progress bar if needed)
    4. Once results are available, combine them in chunk order
    5. Return combined results
    """

    def closure(data, func, *args, **kwargs):
        chunks = list(get_chunks(nb_workers, data, *args, **kwargs))
        worker_meta_args = get_worker_meta_args(data)
        reduce_meta_args = get_reduce_meta_args(data)

        if nb_workers <= 1 or len(chunks) <= 1:
            results = [
                worker(chunk_, index, worker_meta_args, None, False, func, *args, **kwargs)
                for index, chunk_ in enumerate(chunks)
            ]
            return reduce(results, reduce_meta_args)

        manager = Manager()
        queue = manager.Queue()

        workers_args, chunk_lengths = get_workers_args(
            progress_bar, chunks, worker_meta_args, queue, func, args, kwargs
        )

        pool = Pool(len(chunks), worker_init, (WorkerWrapper(worker),))
        try:
            map_result = pool.map_async(global_worker, workers_args)
            pool.close()

            results = get_workers_result(
                len(chunks), progress_bar, queue, chunk_lengths, map_result
            )
            pool.join()

            return reduce(results, reduce_meta_args)

        finally:
            pool.terminate()
            manager.shutdown()

    return closure


class greenlab:
    nb_workers = None
    progress_bar = False
    verbose = 1

    _engines = None

    @classmethod
    def initialize(cls, nb_workers=None, progress_bar=False, verbose=1):
        """
        Initialize the greenlab parallel engine.

        Parameters
        ----------
        nb_workers: int, optional
            Number of workers used for parallelisation
            If not set, all available CPUs will be used, capped by the
            GREENLAB_THREADS environment variable.

        progress_bar: bool, optional
            Display progress bars (on stderr) if set to `True`

        verbose: int, optional
            The verbosity level
            0 - Don't display any logs
            1 - Display only warning logs
            2 - Display all logs
        """
        if verbose not in VERBOSITY_LEVELS:
            raise ConfigError("verbose must be 0, 1 or 2, got {!r}".format(verbose))

        nb_workers = default_nb_workers() if nb_workers is None else int(nb_workers)
        if nb_workers < 1:
            raise ConfigError("nb_workers must be positive, got {}".format(nb_workers))

        configure_logging(verbose)

        cls.nb_workers = nb_workers
        cls.progress_bar = bool(progress_bar)
        cls.verbose = verbose

        logger.info("greenlab will run on %d workers.", nb_workers)

        nbw = nb_workers
        progress = cls.progress_bar

        cls._engines = dict(
            map_points=parallelize(
                nbw, progress, PointMap.get_chunks, PointMap.worker, PointMap.reduce
            ),
            run_chains=parallelize(
                nbw,
                progress,
                ChainSampler.get_chunks,
                ChainSampler.worker,
                ChainSampler.reduce,
            ),
            count_pairs=parallelize(
                nbw,
                progress,
                PairBlocks.get_chunks,
                PairBlocks.worker,
                PairBlocks.reduce,
                get_worker_meta_args=PairBlocks.coordinates,
            ),
        )

    @classmethod
    def _engine(cls, name):
        if cls._engines is None:
            cls.initialize(verbose=cls.verbose)
        return cls._engines[name]

    @classmethod
    def map_points(cls, points, func, *args, **kwargs):
        """[func(point, *args, **kwargs) for point in points], in parallel."""
        return cls._engine("map_points")(points, func, *args, **kwargs)

    @classmethod
    def run_chains(cls, plan, func, *args, **kwargs):
        """Run func(chain_index, length) for every chain of `plan` and
        concatenate the emitted lists in chain order."""
        return cls._engine("run_chains")(plan, func, *args, **kwargs)

    @classmethod
    def count_pairs(cls, coords, func, *args, **kwargs):
        """Stack func(coords, rows, *args) over row blocks of `coords`."""
        return cls._engine("count_pairs")(coords, func, *args, **kwargs)


def configure_logging(verbose):
    root = logging.getLogger(ROOT_LOGGER)
    root.setLevel(VERBOSITY_LEVELS[verbose])

    if not any(getattr(h, "_greenlab", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
        handler._greenlab = True
        root.addHandler(handler)
