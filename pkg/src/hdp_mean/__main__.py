import sys

from hdp_mean.cli import main

sys.exit(main())
