import sys

from nematic.cli import main

sys.exit(main())
