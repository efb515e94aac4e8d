import sys

from legatosim.cli import main

sys.exit(main())
