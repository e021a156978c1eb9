import sys

from effham.app import main

# developer shortcut for running from a checkout:
#       python3 tool/cmd.py derive --preset rabi --order 3 --out dump
if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
