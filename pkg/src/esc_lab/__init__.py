"""Extremum seeking on the epigraph of an unknown cost, with bounded update rates.

Modules: :mod:`~esc_lab.cost` (cost models, growth condition), :mod:`~esc_lab.generators`
(generating pairs), :mod:`~esc_lab.dynamics` (dithers, systems, integrator),
:mod:`~esc_lab.analysis` (practical sets, remainder identity, critical frequency),
:mod:`~esc_lab.experiments` and :mod:`~esc_lab.cli` (batch runs).
"""

__version__ = "0.1.0"
