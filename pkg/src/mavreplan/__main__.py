import sys

from mavreplan.cli import main

sys.exit(main())
