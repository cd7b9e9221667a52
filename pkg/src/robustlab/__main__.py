import sys

from robustlab.harness.cli import main

sys.exit(main())
