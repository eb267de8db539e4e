"""evalgrid: a distributed model-evaluation platform.

Evaluations are described by versioned text manifests, routed to worker
agents under hardware/software constraints, executed through declarative
bit-exact preprocessing pipelines and pluggable predictors, and collected
with hierarchical performance traces.
"""

__version__ = "0.1.0"
