"""``python -m bevbench``."""
import sys

from bevbench.cli import main

sys.exit(main())
