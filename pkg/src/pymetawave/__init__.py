# pymetawave/__init__.py

# Importing main modules and functions to simplify access
from pymetawave.utils import *
