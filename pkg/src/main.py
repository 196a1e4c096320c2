import sys

from quasilocal.cli import cli

if __name__ == "__main__":
    sys.exit(cli())
