import sys

from recomlab.cli import main

sys.exit(main())
