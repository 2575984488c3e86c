from momp.cli import main
import sys

sys.exit(main())
