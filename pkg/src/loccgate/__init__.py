"""Simulator and analysis toolkit for entanglement-assisted LOCC gate protocols."""

from .systems import ALICE, BOB, REFEREE, Factor, Owner, PureState, SystemLayout

__all__ = [
    "ALICE",
    "BOB",
    "REFEREE",
    "Factor",
    "Owner",
    "PureState",
    "SystemLayout",
]

__version__ = "0.1.0"
