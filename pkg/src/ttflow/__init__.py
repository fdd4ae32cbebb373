"""Sampling from unnormalized Boltzmann densities with functional
tensor-train velocity fields, Langevin mutation and SMC resampling."""

from ttflow.tt import TensorTrain
from ttflow.basis import BasisSet, make_fourier_h2
from ttflow.field import FttVectorField
from ttflow.targets import Energy, EnergyPath

__all__ = [
    "TensorTrain",
    "BasisSet",
    "make_fourier_h2",
    "FttVectorField",
    "Energy",
    "EnergyPath",
]
