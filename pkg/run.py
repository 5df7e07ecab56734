#!/usr/bin/env python
"""Command-line runner script"""
import sys

from egoact.main import main

if __name__ == "__main__":
    sys.exit(main())
