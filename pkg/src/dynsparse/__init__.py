"""Sparse identification of governing equations from trajectory data.

Candidate right-hand sides are linear combinations of dictionary terms.
Coefficients are pre-screened by Granger causality and OLS confidence
intervals, then estimated on moving windows by a collocation-discretised
dynamic optimisation. Terms whose window-to-window estimates vary too much
are thresholded away until the active library stabilises.

Typical entry points are :func:`dynsparse.pipeline.discover` and the
``dynsparse`` command line tool.
"""

__version__ = "0.1.0"
