"""Thread cap for the numeric backends, read from ``OTLEX_THREADS``.

This module must stay free of numpy imports so the CLI can export the cap
before any BLAS runtime starts.
"""

import os

from .errors import ConfigError

THREADS_ENV = "OTLEX_THREADS"
BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def thread_count() -> int | None:
    """Thread cap from ``OTLEX_THREADS``; None when unset, 0 for sequential mode."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if count < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0, got {count}")
    return count


def apply_thread_env() -> int | None:
    """Export the cap to the BLAS runtimes (sequential mode runs one thread)."""
    count = thread_count()
    if count is not None:
        for var in BLAS_THREAD_VARS:
            os.environ[var] = str(max(count, 1))
    return count
