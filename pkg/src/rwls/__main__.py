import sys

from rwls.harness.cli import main

sys.exit(main())
