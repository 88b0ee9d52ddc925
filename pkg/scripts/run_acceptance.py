"""Run the acceptance suite and print one line per criterion.

    python scripts/run_acceptance.py            # all ten criteria
    python scripts/run_acceptance.py -k heat    # any extra pytest arguments
"""
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    sys.exit(pytest.main([str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider",
                          "--rootdir", str(ROOT), *sys.argv[1:]]))
