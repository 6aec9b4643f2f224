import sys

from wassmark.cli import main

sys.exit(main())
