import sys

from cavity.cli import main

sys.exit(main())
