#!/usr/bin/env python3
"""Replay-database size sweep (128 .. 1024) at desk scale; traces land in --out."""

import sys

from dtplace.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "dbsize-sweep", *sys.argv[1:]]))
