"""Numerical tolerances shared across the package."""

#: analytic identities (VRI location, spectra, widths, event surfaces)
ANALYTIC_TOL = 1e-10
#: residuals of the 3x3 coefficient system
LINEAR_RESIDUAL_TOL = 1e-12
#: finite-difference checks of derivatives
FD_REL_TOL = 1e-6
FD_STEP = 1e-5
#: Newton convergence for critical points
NEWTON_GRAD_TOL = 1e-12
NEWTON_MAX_ITER = 50
#: bracket offset for the VRI root search on (0, x_s)
VRI_BRACKET_EPS = 1e-6
#: energy-shell accuracy of generated initial conditions
SHELL_TOL = 1e-14
#: minimum forward excursion before a crossing of x = 0 counts as a recross
X_ENTRY_MIN = 1e-3
