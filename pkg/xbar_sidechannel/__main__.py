import sys

from xbar_sidechannel.experiment.cli import main

sys.exit(main())
