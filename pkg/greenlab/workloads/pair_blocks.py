import numpy as np

from greenlab.utils.tools import PROGRESSION, chunk

# Rows handled at once by a worker; bounds the (rows x N) distance block
BLOCK_ROWS = 256


class PairBlocks:
    @staticmethod
    def coordinates(coords):
        return np.asarray(coords)

    @staticmethod
    def reduce(results, _):
        return np.vstack(results)

    @staticmethod
    def get_chunks(nb_workers, coords, *args, **kwargs):
        for chunk_ in chunk(len(coords), nb_workers):
            yield range(chunk_.start, chunk_.stop)

    @staticmethod
    def worker(rows, index, coords, queue, progress_bar, func, *args, **kwargs):
        blocks = []

        for start in range(rows.start, rows.stop, BLOCK_ROWS):
            block = range(start, min(start + BLOCK_ROWS, rows.stop))
            blocks.append(func(coords, block, *args, **kwargs))

            if progress_bar:
                queue.put_nowait((PROGRESSION, (index, block.stop - rows.start)))

        return np.vstack(blocks)
