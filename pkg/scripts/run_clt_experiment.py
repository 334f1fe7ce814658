#!/usr/bin/env python3
"""Run a CLT experiment from a config file and print the verdict table.

Thin wrapper over `exgeo clt`; keeps the experiment reproducible from the
command line without installing the console script.

    python scripts/run_clt_experiment.py configs/reference_d1.ini out/d1
"""

import sys

from exgeo.cli import main

if __name__ == "__main__":
    if len(sys.argv) != 3:
        print(__doc__)
        raise SystemExit(2)
    raise SystemExit(main(["clt", "--config", sys.argv[1], "--out", sys.argv[2]]))
