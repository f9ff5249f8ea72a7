"""Module entry point so `python -m ucdl` behaves like the console script."""

import sys

from .cli import main

sys.exit(main())
