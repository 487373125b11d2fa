"""Desk-scale Monte Carlo production campaign simulator.

Subpackages cover the full chain: toy generation and filtering
(``genfilter``), pile-up overlay (``pileup``), a reconstruction stub
(``reco``), histogram validation (``validate``), the virtual-data and
file catalogs (``vdc``, ``catalogs``), a discrete-event farm simulator
(``farm``) and the operator service (``svc``).
"""

from dc1sim import core

__all__ = ["core"]
__version__ = "0.1.0"
