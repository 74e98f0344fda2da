"""Van der Pol experiment (alpha = 5, from (1, 1)) in all three propagation modes.

    python3 scripts/run_vanderpol.py [--out DIR] [--seed N] [--n-mc N]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from run_lorenz import main  # noqa: E402

if __name__ == "__main__":
    main("vanderpol.ini", __doc__.splitlines()[0])
