"""Console-script shim that applies the thread cap before numpy loads.

BLAS libraries size their thread pools when numpy is first imported, so the
--threads flag (or CHAOS_REPLICA_THREADS) has to be turned into environment
variables before any package import pulls numpy in.  Everything else is
argparse's job in :mod:`.cli`.
"""

import os
import sys

_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "NUMEXPR_NUM_THREADS")


def _peek_threads(argv) -> str:
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--threads="):
            return arg.split("=", 1)[1]
    return os.environ.get("CHAOS_REPLICA_THREADS", "")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    cap = _peek_threads(argv)
    if cap.isdigit() and int(cap) >= 1:
        for var in _BLAS_VARS:
            os.environ.setdefault(var, cap)
    from .cli import main as run
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
