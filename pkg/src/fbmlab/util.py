"""Small shared utilities: deterministic replica execution, Wilson bounds."""

from __future__ import annotations

import math


def run_replicas(fn, sizes, threads: int = 1):
    """Run fn(replica_index, size) for each entry of sizes.

    Results come back ordered by replica index, and every replica draws from
    its own substream, so the thread count never changes the output.
    """
    if threads <= 1:
        return [fn(i, s) for i, s in enumerate(sizes)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as ex:
        futures = [ex.submit(fn, i, s) for i, s in enumerate(sizes)]
        return [f.result() for f in futures]


def batch_sizes(total: int, batch: int):
    sizes = [batch] * (total // batch)
    if total % batch:
        sizes.append(total % batch)
    return sizes


def wilson_upper(count: int, total: int, z: float = 1.96) -> float:
    """Upper end of the Wilson score interval for a binomial proportion."""
    if total == 0:
        return 1.0
    phat = count / total
    denom = 1.0 + z**2 / total
    centre = phat + z**2 / (2 * total)
    rad = z * math.sqrt(phat * (1 - phat) / total + z**2 / (4 * total**2))
    return (centre + rad) / denom
