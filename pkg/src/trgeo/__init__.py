"""trgeo: numerical geometry of totally real submanifolds in Kahler charts.

Submodules
----------
ambient            Kahler metric/curvature kernel on chart domains
immersion          discretized immersions of T^1/T^2, J-volume machinery
curve_lab          Fourier/Laurent theory of closed plane curves
geodesic_flow      spectral and time-stepped canonical geodesic flows
variation_harness  finite-difference oracles for variations of the J-volume
cli                scenario-driven command line front end
"""

__version__ = "0.1.0"
