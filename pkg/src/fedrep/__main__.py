import sys

from fedrep.cli import main

sys.exit(main())
