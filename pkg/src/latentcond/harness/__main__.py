import sys

from latentcond.harness.cli import main

sys.exit(main())
