import logging
import time
from contextlib import contextmanager

from pdirichlet_ritz.backend.metrics import create_collector


logger = logging.getLogger(__name__)


"""训练过程指标"""
TRAIN_STEPS = create_collector("Counter",
    'pdritz_train_steps_total',
    'Optimizer steps executed',
    ['experiment', 'optimizer']
)
TRAIN_LOSS = create_collector("Gauge",
    'pdritz_train_loss',
    'Loss after the latest optimizer step',
    ['experiment']
)
STEP_LATENCY = create_collector("Histogram",
    'pdritz_step_latency_seconds',
    'Wall clock of one loss-and-gradient evaluation plus update',
    ['experiment', 'optimizer'],
    buckets=[0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1, 5, 10, 60]
)
NEWTON_ITERATIONS = create_collector("Counter",
    'pdritz_newton_iterations_total',
    'Damped Newton iterations of the finite-difference oracle',
    ['bc']
)
QUADRATURE_POINTS = create_collector("Gauge",
    'pdritz_quadrature_points',
    'Points in the current interior quadrature set',
    ['experiment']
)


@contextmanager
def timed_step(experiment: str, optimizer: str):
    """记录一步优化的耗时和计数"""
    start_time = time.perf_counter()
    yield
    STEP_LATENCY.labels(experiment=experiment, optimizer=optimizer).observe(time.perf_counter() - start_time)
    TRAIN_STEPS.labels(experiment=experiment, optimizer=optimizer).inc()
