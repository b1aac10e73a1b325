#!/usr/bin/env python3
"""Learning-rate sweep (1e-5 .. 1e-2) at desk scale; traces land in --out."""

import sys

from dtplace.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "lr-sweep", *sys.argv[1:]]))
