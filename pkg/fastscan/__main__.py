"""Allow ``python -m fastscan``."""

import sys

from fastscan.cli import main

sys.exit(main())
