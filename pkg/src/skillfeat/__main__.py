import sys

from skillfeat.cli import main

sys.exit(main())
