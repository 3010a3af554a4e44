"""
Launcher for the ``efshap`` command: ``python efshap.py <subcommand> ...``.
"""

import os
import sys

# Add project root to Python path
project_root = os.path.abspath(os.path.dirname(__file__))
sys.path.insert(0, project_root)

from src.cli.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
