"""Thyristor rectifier simulation and small-signal stability toolkit.

Three model fidelities of the line-commutated six/twelve-pulse rectifier —
a detailed switching simulator, a quasi-static phasor (RMS) model, and a
switching-period-averaged dq-domain (EMT) model — plus DAE composition,
time integration, frequency scanning, and eigenvalue/bifurcation analysis.
"""

__version__ = "0.1.0"
