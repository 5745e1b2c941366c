"""Standing waves, stability thresholds and blowup experiments for the 1-D
focusing nonlinear Schrodinger equation with an attractive delta potential."""

__version__ = "0.1.0"
