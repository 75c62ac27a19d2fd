"""hsgs: spectral-Galerkin simulator for the hydrostatic primitive
equations with horizontal viscosity/diffusivity and transport noise on a
cylindrical domain, plus the verification suites for the structural
inequalities the model relies on."""

__version__ = "0.1.0"
