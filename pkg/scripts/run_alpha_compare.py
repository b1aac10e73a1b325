#!/usr/bin/env python3
"""Scheme comparison across the time/energy weight; comparison.csv lands in --out."""

import sys

from dtplace.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "alpha-compare", *sys.argv[1:]]))
