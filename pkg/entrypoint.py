"""Command-line entrypoint.

Modes (``python entrypoint.py MODE --help`` for flags):
- run            - Lloyd iteration from given or random points
- ladder         - splitting ladder 1..Nmax
- bounded        - Lloyd iteration confined to a ball
- radius         - a-priori radius bound
- hessian        - Hessian eigenvalues and stability label
- optimal-error  - multi-start estimate of e_N

Results land in ``--out`` (default ``$OPTIQUANT_OUT`` or ``./out``).
Exit codes: 0 success, 2 configuration errors, 3 numerical failures.
"""

import sys

from optiquant.cli import main

if __name__ == "__main__":
    sys.exit(main())
