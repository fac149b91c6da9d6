import sys

from fsomimo.cli import main

sys.exit(main())
