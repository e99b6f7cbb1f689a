"""Relativistic kinetic ensemble coupled to a Klein-Gordon field.

Library layout:

- ``specfun``   Bessel kernels, kernel table, mollifiers
- ``field``     explicit Klein-Gordon solver (homogeneous + retarded parts)
- ``kinetic``   characteristics, phase-space density, velocity moments
- ``picard``    fixed-point driver coupling field and transport
- ``analysis``  conservation diagnostics, smallness threshold, weak residuals
- ``cli``       batch front-end (check-data / simulate / refine)
"""

__version__ = "0.1.0"
