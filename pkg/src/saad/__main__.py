import sys

from saad.cli import main

sys.exit(main())
