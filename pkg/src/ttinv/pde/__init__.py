"""Discretized model problems: Poisson, Boltzmann-BGK and Fokker-Planck."""
