import sys

from calibra.cli import main

sys.exit(main())
