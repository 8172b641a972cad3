import sys

from largegames.cli import main

sys.exit(main())
