import sys

from bcmkit.cli import main

sys.exit(main())
