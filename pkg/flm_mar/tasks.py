from celery import shared_task
from celery.utils.log import get_task_logger

from .gof import run_bootstrap_chunk
from .simulation import run_replicate

logger = get_task_logger(__name__)


@shared_task(name="flm_mar.tasks.bootstrap_chunk")
def bootstrap_chunk(payload):
    _, replicates = payload
    logger.info("Running %d bootstrap replicates.", len(replicates))
    return run_bootstrap_chunk(payload)


@shared_task(name="flm_mar.tasks.mc_replicate")
def mc_replicate(work):
    logger.info("Running Monte Carlo replicate %s.", work.label)
    return run_replicate(work)
