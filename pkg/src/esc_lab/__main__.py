import sys

from esc_lab.cli import main

sys.exit(main())
