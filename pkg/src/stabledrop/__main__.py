"""Module entry: python -m stabledrop."""

import sys

from .cli import main

sys.exit(main())
