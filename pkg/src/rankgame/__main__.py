import sys

from rankgame.cli import main

sys.exit(main())
