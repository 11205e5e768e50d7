"""Solver defaults and the thread cap.

The thread cap is read from the ``SYLVERSE_THREADS`` environment variable.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Mapping, Optional, TypeVar

from .errors import ValidationError

logger = logging.getLogger(__name__)

THREADS_ENV = "SYLVERSE_THREADS"

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class SolverSettings:
    """Default numerical parameters.

    Attributes
    ----------
    expm_tol : float
        Tolerance handed to ``matcore.expm`` when callers do not choose one.
    quad_tol : float
        Default absolute tolerance of adaptive quadrature.
    quad_node_budget : int
        Maximum number of integrand evaluations per quadrature call.
    dense_cap : int
        Largest (M+R)·N for which block systems are assembled densely.
    svd_cap : int
        Largest dimension for which norms use a full SVD.
    dyson_order : int
        Default truncation order of Dyson series.
    inner_grid : int
        Default number of Gauss nodes per Dyson substep.
    """

    expm_tol: float = 1e-14
    quad_tol: float = 1e-10
    quad_node_budget: int = 400_000
    dense_cap: int = 4096
    svd_cap: int = 512
    dyson_order: int = 14
    inner_grid: int = 10


DEFAULT_SETTINGS = SolverSettings()


def thread_cap(environ: Optional[Mapping[str, str]] = None) -> int:
    """Return the worker-thread cap.

    Parameters
    ----------
    environ : Mapping, optional
        Mapping to read from instead of ``os.environ``.

    Returns
    -------
    int
        Positive number of worker threads.

    Raises
    ------
    ValidationError
        If the environment variable is not a positive integer.
    """
    env = os.environ if environ is None else environ
    raw = env.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", field=THREADS_ENV) from None
    if value < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", field=THREADS_ENV)
    return value


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Evaluate ``fn`` on every item and return the results in input order.

    Evaluations run on a thread pool limited by :func:`thread_cap`; with a cap of one
    or a single item they run inline.
    """
    work = list(items)
    workers = min(thread_cap(), len(work))
    if workers <= 1:
        return [fn(item) for item in work]
    logger.debug("Evaluating %d items on %d threads", len(work), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, work))
