"""Entry point for ``python -m src.main``."""

import sys

from .boxtrack.cli import main

if __name__ == "__main__":
    sys.exit(main())
