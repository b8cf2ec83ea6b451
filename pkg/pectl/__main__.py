#!/usr/bin/env python3
"""
Allow pectl to be run as a module: python -m pectl
"""
import sys

from .main import main

if __name__ == '__main__':
    sys.exit(main())
