import os

# one BLAS thread per process: OpenBLAS threading thrashes on small problems
# and the heavy tests parallelise across worker processes instead
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

from hypothesis import settings

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")
