import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "LADDERFORGE_THREADS"


def worker_count() -> int:
    """Worker cap from LADDERFORGE_THREADS; 0 or unset means one per CPU."""
    raw = os.environ.get(ENV_THREADS, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"{ENV_THREADS} must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def ordered_map(fn, items):
    """Map over items on a thread pool; results keep input order."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
