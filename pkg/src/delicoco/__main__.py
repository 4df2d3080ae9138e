import sys

from delicoco.cli import main

sys.exit(main())
