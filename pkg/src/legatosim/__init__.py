"""Discrete-event simulator for energy-aware scheduling on heterogeneous clusters.

Models FPGA supply-voltage underscaling (power vs. bit-flip rate), GPU/CPU
checkpoint and recovery costs, and the HEATS placement/migration policy.
"""

__version__ = "0.1.0"
