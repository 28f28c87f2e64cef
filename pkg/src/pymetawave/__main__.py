# pymetawave/__main__.py

import sys

from pymetawave.utils.autoprocess import cli


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
