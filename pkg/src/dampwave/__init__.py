"""Numerical lifespan laboratory for u_tt - Δu + <x>^{-α}(1+t)^{-β} u_t = |u|^p."""

__version__ = "0.1.0"
