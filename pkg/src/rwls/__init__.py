"""Monte Carlo laboratory for the two-dimensional random walk loop soup.

Exact samplers for the loop soup, its occupation field and the discrete
Gaussian free field, together with detectors for crossing and arm events and
a statistical harness that checks the exact laws these objects satisfy.
"""

__version__ = "0.1.0"

from rwls.lattice import Domain, Vertex
from rwls.rng import stream

__all__ = ["Domain", "Vertex", "stream", "__version__"]
