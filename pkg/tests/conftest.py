import os

os.environ.setdefault("SOLVER_THREADS", "2")
