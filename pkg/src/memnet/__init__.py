"""Co-simulator for a two-terminal oxide memristor coupled to a circuit.

Core modules: ``grid`` (finite-volume mesh), ``poisson`` (mixed-boundary
elliptic solves), ``transport`` (Scharfetter-Gummel carrier stepping),
``netlist``/``network`` (modified nodal analysis and index-1 decoupling),
``coupling`` (terminal currents and boundary potential), ``diagnostics``
(free energy, dissipation, conservation), ``simulate`` (orchestration),
``service`` (HTTP API), ``cli`` (thin client).
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    config,
    coupling,
    diagnostics,
    errors,
    grid,
    netlist,
    network,
    poisson,
    simulate,
    transport,
)
