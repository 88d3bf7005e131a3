"""Linear Paul trap modelling: loaded RF circuit, nodal-line displacement,
Coulomb-crystal molecular dynamics, cold-fluid calibration fits and cavity
overlap tomography."""

__version__ = "0.1.0"
