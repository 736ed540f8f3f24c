import sys

from vodsim.cli import main

sys.exit(main())
