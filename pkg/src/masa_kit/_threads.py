"""Worker-count pinning via MASA_KIT_THREADS.

BLAS backends read their thread settings when they load, so this must run
before numpy is imported anywhere in the process. The package __init__
imports this module first.
"""

import os


def _pin_threads() -> str:
    value = os.environ.get("MASA_KIT_THREADS", "")
    if value:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, value)
    return value or "default"


WORKERS = _pin_threads()
