"""Constrained N-body simulation and Graph Mechanics Networks on a small numpy autodiff core."""

import os

# GMNLAB_THREADS caps BLAS threads too; this must run before numpy is imported
_threads = os.environ.get("GMNLAB_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
