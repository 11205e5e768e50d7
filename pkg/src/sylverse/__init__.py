"""Classical laboratory for linear matrix differential equations.

The package solves dX/dt = A†X + XB + C with X(0) = D, builds the history-state
constructions used to estimate entries <φ|X(t)|ψ>, certifies their conditioning and
evaluates the associated query-cost formulas.
"""

import logging

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
