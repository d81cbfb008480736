import itertools

from greenlab.utils.tools import PROGRESSION, chunk


class PointMap:
    @staticmethod
    def reduce(results, _):
        return list(itertools.chain.from_iterable(results))

    @staticmethod
    def get_chunks(nb_workers, points, *args, **kwargs):
        points = list(points)

        for chunk_ in chunk(len(points), nb_workers):
            yield points[chunk_]

    @staticmethod
    def worker(points, index, _meta_args, queue, progress_bar, func, *args, **kwargs):
        results = []

        for iteration, point in enumerate(points):
            results.append(func(point, *args, **kwargs))

            if progress_bar:
                queue.put_nowait((PROGRESSION, (index, iteration + 1)))

        return results
