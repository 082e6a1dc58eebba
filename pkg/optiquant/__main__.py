import sys

from optiquant.cli import main

sys.exit(main())
