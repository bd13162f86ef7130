"""Curve shortening on surfaces near closed geodesics: satellites, Hill spectra, flows."""
