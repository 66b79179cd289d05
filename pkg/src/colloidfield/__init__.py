"""Far-field structure of director fields around colloidal particles.

Minimizers of the one-constant Frank energy outside a star-shaped particle
are computed on a mapped spherical grid; their far field is fitted to a
multipole expansion, the monopole is tested against the gradient of the
minimal energy with respect to the far-field direction, and an exterior
Poisson solver certifies power-law decay.
"""
from ._errors import *  # noqa: F401,F403
from .anchoring import *  # noqa: F401,F403
from .config import *  # noqa: F401,F403
from .expansion import *  # noqa: F401,F403
from .exterior_grid import *  # noqa: F401,F403
from .fields import *  # noqa: F401,F403
from .minimizer import *  # noqa: F401,F403
from .poisson_decay import *  # noqa: F401,F403
from .sphgrid import *  # noqa: F401,F403
from .torque import *  # noqa: F401,F403

__version__ = "0.1.0"
