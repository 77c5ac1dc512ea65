"""Ordered fan-out over a billiard process pool or a Celery group."""
import logging
import math

from billiard import Pool
from celery import current_app, current_task, group
from django.conf import settings

logger = logging.getLogger(__name__)


def resolve_threads(threads=None):
    if threads is None:
        threads = settings.FLM["THREADS"]
    return max(1, int(threads))


def chunked(items, threads=None, per_worker=4):
    """Split items into contiguous chunks, a few per worker."""
    items = list(items)
    if not items:
        return []
    count = min(len(items), resolve_threads(threads) * per_worker)
    size = math.ceil(len(items) / count)
    return [items[start:start + size] for start in range(0, len(items), size)]


def _inside_task():
    return bool(current_task)


def map_ordered(func, items, *, threads=None, task=None):
    """``[func(item) for item in items]``, possibly in parallel, always in input order.

    With FLM USE_CELERY set and a task name given, items are sent to Celery
    workers as a group of that task. Inside a running task the items are
    mapped inline, so a worker never waits on its own queue.
    """
    items = list(items)
    threads = resolve_threads(threads)
    if _inside_task():
        return [func(item) for item in items]
    if task and settings.FLM["USE_CELERY"]:
        signature = current_app.signature(task)
        logger.debug("Dispatching %d items to Celery task %s.", len(items), task)
        result = group(signature.clone(args=(item,)) for item in items).apply_async()
        return result.get(disable_sync_subtasks=False)
    if threads == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with Pool(processes=min(threads, len(items))) as pool:
        return pool.map(func, items)
