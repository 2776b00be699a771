"""qkdsim - incoherently sourced polarization BB84 link simulator"""

__version__ = "1.0.0"
__author__ = "tiramisu"
