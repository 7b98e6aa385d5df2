import sys

from capcycle.cli import main

sys.exit(main())
