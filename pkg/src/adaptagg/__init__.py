"""Model-adaptive time aggregation for capacity-expansion energy system models."""

__version__ = "0.1.0"
