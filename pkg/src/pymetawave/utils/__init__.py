# pymetawave/utils/__init__.py

from pymetawave.utils.errors import *
from pymetawave.utils.elliptic import *
from pymetawave.utils.orbits import *
from pymetawave.utils.melnikov import *
from pymetawave.utils.wavesolver import *
from pymetawave.utils.floquet import *
from pymetawave.utils.lattice import *
from pymetawave.utils.writeout import *
from pymetawave.utils.plotgen import *
from pymetawave.utils.autoprocess import *
