from concurrent.futures import ThreadPoolExecutor

from .conf import lab_setting


def parallel_map(func, items, threads=None):
    """Map ``func`` over ``items`` preserving order.

    NumPy and LAPACK release the GIL, so threads overlap the dense solves.
    Results come back in input order, which keeps every reduction over them
    deterministic.
    """
    items = list(items)
    threads = threads or lab_setting('THREADS')
    if threads <= 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
