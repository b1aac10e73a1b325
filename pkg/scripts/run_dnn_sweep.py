#!/usr/bin/env python3
"""Ensemble-size sweep (K = 2 .. 16) at desk scale; traces land in --out."""

import sys

from dtplace.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "dnn-sweep", *sys.argv[1:]]))
