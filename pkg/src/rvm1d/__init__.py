"""Particle simulator and identity diagnostics for the 1.5D relativistic Vlasov-Maxwell system."""
__version__ = "0.1.0"
