"""Shared constants across the verifier."""

# Refinement budgets: refinement iterations per split box, bound sweeps per iteration
DEFAULT_REFINE_ITERS = 8
DEFAULT_BOUND_ITERS = 4

# Branch-and-bound defaults
DEFAULT_BATCH_SIZE = 128
DEFAULT_TIMEOUT = 116.0
DEFAULT_MAX_DEPTH = 1000
DEFAULT_SHRINK_THRESHOLD = 0.01

# Numerical tolerances
FALSIFY_TOLERANCE = 1e-6
FEASIBILITY_TOL = 1e-9
SMOOTH_ERROR_PAD = 1e-9

# Coefficients smaller than this (relative to their row) are ignored when tightening bounds
RELATIVE_COEF_TOL = 1e-9

# Oracle size limits
ORACLE_MAX_RELU = 12
ORACLE_MAX_FACTORS = 8
ORACLE_MAX_FACETS = 24
GRID_MAX_CORNER_DIM = 12

# Result words (VNN-COMP convention)
RESULT_SAT = "sat"
RESULT_UNSAT = "unsat"
RESULT_UNKNOWN = "unknown"
RESULT_WORDS = (RESULT_SAT, RESULT_UNSAT, RESULT_UNKNOWN)

# Default file names
DEFAULT_LOG_FILE = "zonoverify.log"
DEFAULT_DB_PATH = "results.sqlite"
