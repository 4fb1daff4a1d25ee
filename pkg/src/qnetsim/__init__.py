"""Discrete-event simulator for a three-node entanglement network.

Subpackages by concern:

* :mod:`qnetsim.qstate` -- dense density-matrix engine (up to 4 qubits).
* :mod:`qnetsim.linkmodel` -- heralded single-photon link states, herald
  statistics, and per-source error budgets.
* :mod:`qnetsim.noise` -- memory decoherence, depolarizing lumps, readout
  error models, and the memory-decay fit.
* :mod:`qnetsim.phasestab` -- interferometric phase detection and the
  time-multiplexed closed-loop stabilization.
* :mod:`qnetsim.protocol` -- the delivery sequence, GHZ distribution and
  entanglement swapping (analytic enumeration and Monte Carlo).
* :mod:`qnetsim.tomo` -- readout correction and fidelity estimation from
  measured correlators.
* :mod:`qnetsim.config` -- experiment configuration files.
* :mod:`qnetsim.cli` -- the ``qnetsim`` command-line interface.
"""

from . import linkmodel, noise, phasestab, protocol, qstate, tomo  # TEMP: cli, config pending

__version__ = "0.1.0"

__all__ = [
    "cli",
    "config",
    "linkmodel",
    "noise",
    "phasestab",
    "protocol",
    "qstate",
    "tomo",
    "__version__",
]
