"""Two-group neutron-diffusion criticality toolkit."""

__version__ = "0.1.0"
