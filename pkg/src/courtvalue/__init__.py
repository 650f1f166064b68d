"""Expected-points estimation from basketball tracking windows.

A stacked-LSTM classifier predicts the distribution over terminal actions
for every moment of a possession; the distribution is turned into expected
points and expected points added for micro-actions such as passes.
"""

from courtvalue.tracking import (
    CourtGeometry,
    Lineup,
    Moment,
    Possession,
    TerminalAction,
    ValidationError,
    Window,
)

__all__ = [
    "CourtGeometry",
    "Lineup",
    "Moment",
    "Possession",
    "TerminalAction",
    "ValidationError",
    "Window",
]

__version__ = "0.1.0"
