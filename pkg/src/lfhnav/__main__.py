import sys

from lfhnav.cli import main

sys.exit(main())
