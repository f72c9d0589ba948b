"""Desk-scale chiller plant with a data-driven optimization stack.

Subpackages: simplant (ground-truth simulator), telemetry (storage,
splitting, cleaning, metrics), enrich (active data enrichment), surrogate
(module-wise plant models), optimize (constrained real-time minimization),
baselining (savings measurement), service (HTTP control service), cli.
"""

__version__ = "0.1.0"
