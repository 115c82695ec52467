#!/usr/bin/env python3
"""
Entry point for the label-uncertainty mixing lab.

    python run_lab.py train --config src/config/base.yaml
    python run_lab.py sweep --spec src/config/sweeps/components.yaml
"""

import os
import sys

BASE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(BASE, "src"))

from experiment.cli import cli_main  # noqa: E402

if __name__ == "__main__":
    sys.exit(cli_main())
