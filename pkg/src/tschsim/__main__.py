import sys

from tschsim.cli import main

sys.exit(main())
