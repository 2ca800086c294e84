import sys

from thermocast.cli import main

sys.exit(main())
