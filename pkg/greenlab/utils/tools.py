import itertools as _itertools

PROGRESSION, VALUE, ERROR = list(range(3))

# Odd 64-bit constant used to spread chain indices over the seed space
SEED_STRIDE = 0x9E3779B97F4A7C15
SEED_MASK = (1 << 64) - 1


def chunk(nb_item, nb_chunks):
    """
    Return at most `nb_chunks` contiguous slices covering `range(nb_item)`.

    Parameters
    ----------
    nb_item : int
        Total number of items

    nb_chunks : int
        Number of chunks to return

    Returns
    -------
    A list of slices; the first `nb_item % nb_chunks` slices hold one extra
    item.

    Examples
    --------
    >>> chunk(103, 4)
    [slice(0, 26, None), slice(26, 52, None), slice(52, 78, None),
     slice(78, 103, None)]
    >>> chunk(2, 4)
    [slice(0, 1, None), slice(1, 2, None)]
    """
    nb_chunks = max(int(nb_chunks), 1)

    if nb_item <= nb_chunks:
        return [slice(idx, idx + 1) for idx in range(nb_item)]

    quotient, remainder = divmod(nb_item, nb_chunks)
    nb_elems_per_chunk = [quotient + 1] * remainder + [quotient] * (
        nb_chunks - remainder
    )

    accumulated = list(_itertools.accumulate(nb_elems_per_chunk))
    starts = [0] + accumulated[:-1]

    return [slice(begin, end) for begin, end in zip(starts, accumulated)]


def derive_seed(seed, chain_index):
    """Seed of the `chain_index`-th independent chain: seed xor (index * stride)."""
    return (int(seed) ^ ((int(chain_index) * SEED_STRIDE) & SEED_MASK)) & SEED_MASK
