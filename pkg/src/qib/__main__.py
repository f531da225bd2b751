import sys

from qib.cli import main

sys.exit(main())
