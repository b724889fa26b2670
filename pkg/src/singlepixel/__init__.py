"""Single-pixel imaging: simulation, classical reconstruction (DGI/ISTA), and a
self-supervised ISTA-unrolled network trained per image from 1-D measurements.
"""

__version__ = "0.1.0"
