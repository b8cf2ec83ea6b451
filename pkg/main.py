#!/usr/bin/env python3
"""
pectl - Main Entry Point
-----------
Runs the pectl command line from a source checkout.

Subcommands:
  kernel        : Compute the gain kernel and write it as CSV
  check-gains   : Evaluate the stability conditions for a scenario
  simulate      : Run a scenario and write its trajectory
  sweep         : Run a scenario over a range of one parameter

Dependencies:
  pip install numpy scipy rich
"""
import os
import sys


def main():
    script_dir = os.path.dirname(os.path.abspath(__file__))
    sys.path.insert(0, script_dir)

    from pectl.main import main as cli_main
    return cli_main()


if __name__ == '__main__':
    sys.exit(main())
