import os
import sys

# make helpers/oracles importable no matter where pytest is invoked from
sys.path.insert(0, os.path.dirname(__file__))
