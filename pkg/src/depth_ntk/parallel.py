from concurrent.futures import ProcessPoolExecutor


def pmap(func, tasks, jobs: int = 1):
    """Ordered map; runs in worker processes when jobs > 1."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))
