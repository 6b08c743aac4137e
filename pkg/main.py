"""
Asynchronous federated clustering: command-line entry point.
"""

import os
import sys
import faulthandler
if sys.stderr is not None:
    faulthandler.enable()
import logging

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, BASE_DIR)

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(name)s: %(message)s'
)


def main():
    from app.cli import main as cli_main
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
