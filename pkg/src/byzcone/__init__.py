"""byzcone: a byzantine runs-and-systems simulator and analyzers.

Generates transitional runs under agent/environment protocols with at
most f byzantine agents, computes reliable causal cones, performs
cone-equivalent run adjustments, and evaluates knowledge and hope
formulas over bounded run universes.
"""

__version__ = "0.1.0"
