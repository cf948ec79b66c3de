"""Physical and numerical defaults, kept in one place."""

import math

# Reference quadrature box and resolution.
GRID_X_MAX = 8.0
GRID_N_POINTS = 1024

# Box used for the identity verification matrix. At q = 0.3, x_m = -2 the
# post-feedback state sits near x = -6 to -7 and does not fit in [-8, 8].
VERIFY_X_MAX = 12.0
VERIFY_N_POINTS = 1024

# Box used for Monte Carlo trajectories; post-feedback states are amplified by 1/q.
ENSEMBLE_X_MAX = 16.0
ENSEMBLE_N_POINTS = 2048

# Tolerances.
BOUNDARY_RTOL = 1e-8
NORM_DRIFT_RTOL = 1e-6
NORMALIZED_TOL = 1e-6
IDENTITY_THRESHOLD = 1e-4
PHOTON_RESIDUAL_MAX = 1e-3

# Outcome (x_m) quadrature.
XM_MIN_NODES = 512
XM_SPAN_WIDTHS = 8.0

# Verification matrix.
VERIFY_Q_VALUES = (0.3, 0.5, 1.0 / math.sqrt(2.0), 0.9)
VERIFY_XM_VALUES = (-2.0, 0.0, 0.7)
VERIFY_N_RANDOM = 20
VERIFY_RANDOM_SEED = 20000
VERIFY_MAX_FOCK = 3

FLOAT_FORMAT = ".17g"
