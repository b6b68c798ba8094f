"""Spectral splitting integrators, modified energies and Birkhoff normal forms
for the nonlinear Klein-Gordon equation on the one-dimensional torus.

Mode vectors are 1-d complex arrays of length K ordered by mode_numbers(K).
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401
