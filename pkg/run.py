"""
Entry point for the hoil command line.

Dispatches to the subcommands in hoil.controllers.cli and exits with the
command's status: 0 ok, 1 usage/config, 2 data, 3 numerical failure.
"""
import sys
from hoil import run

if __name__ == '__main__':
    try:
        sys.exit(run(sys.argv[1:]))
    except KeyboardInterrupt:
        print("\n\n👋 Goodbye!")
        sys.exit(130)
