"""Pseudo-conformal simulation of the critical nonlinear Schroedinger equation."""
