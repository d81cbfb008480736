import itertools

from greenlab.utils.tools import PROGRESSION, chunk


class ChainPlan:
    """`count` items split over `nb_chains` independent chains."""

    def __init__(self, count, nb_chains):
        self.count = int(count)
        self.nb_chains = max(1, min(int(nb_chains), self.count))

    def lengths(self):
        return [s.stop - s.start for s in chunk(self.count, self.nb_chains)]


class ChainSampler:
    @staticmethod
    def reduce(results, _):
        # results: one list of chains per worker, chains already in index order
        return list(itertools.chain.from_iterable(itertools.chain.from_iterable(results)))

    @staticmethod
    def get_chunks(nb_workers, plan, *args, **kwargs):
        chains = list(enumerate(plan.lengths()))

        for chunk_ in chunk(len(chains), nb_workers):
            yield chains[chunk_]

    @staticmethod
    def worker(chains, index, _meta_args, queue, progress_bar, func, *args, **kwargs):
        emitted = []
        done = 0

        for chain_index, length in chains:
            emitted.append(func(chain_index, length, *args, **kwargs))
            done += length

            if progress_bar:
                queue.put_nowait((PROGRESSION, (index, done)))

        return emitted
