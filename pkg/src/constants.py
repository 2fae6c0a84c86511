"""
================================================================================
                    CONSTANTS AND CONFIGURATION
================================================================================

MODULE: Shared constants, reference instances and environment configuration

DESCRIPTION:
    Central place for numeric defaults (tolerances, iteration caps), the
    reference instances reproduced by the experiments module and the golden
    values they are checked against. Runtime settings are read from the
    environment; a local .env file is loaded first.

CONFIGURATION:
    Add the following to your .env file (all optional):

    QDRO_OUTPUT_DIR=results
    QDRO_MAX_ITERATIONS=5000
    QDRO_LOG_LEVEL=WARNING
    QDRO_SWEEP_WORKERS=1

================================================================================
"""

import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# ✅ Runtime configuration (Retrieved from environment variables)
OUTPUT_DIR = os.getenv("QDRO_OUTPUT_DIR", "results")
MAX_ITERATIONS = int(os.getenv("QDRO_MAX_ITERATIONS", 5000))
LOG_LEVEL = os.getenv("QDRO_LOG_LEVEL", "WARNING").upper()
SWEEP_WORKERS = int(os.getenv("QDRO_SWEEP_WORKERS", 1))

# Default tolerances
FEAS_TOL = 1e-9
OPT_TOL = 1e-8
CERT_TOL = 1e-6
DEGEN_TOL = 1e-7
AXIOM_TOL = 1e-6

# Logs are taken of max(x, LOG_FLOOR)
LOG_FLOOR = 1e-300
# Lower bound kept on every coordinate by the projected-gradient path
POSITIVITY_FLOOR = 1e-12
# Worst-case oracle caps
ASCENT_MAX_ITERATIONS = 10_000
DYKSTRA_MAX_ITERATIONS = 10_000
BRUTE_FORCE_MAX_CATEGORIES = 4
BRUTE_FORCE_MIN_STEP = 1e-3
BRUTE_FORCE_MAX_POINTS = 2_000_000

# Output formatting
FLOAT_DECIMALS = 6
SVG_HASH_SALT = "qdro-smoothing"

# ✅ Reference instances
EXPERIMENT1_P_HAT = (0.00, 0.15, 0.15, 0.30, 0.40)
EXPERIMENT1_EPSILON = 0.2
EXPERIMENT1_Q = 2.0
EXPERIMENT1_GOLDEN_X = (0.1342, 0.1792, 0.1792, 0.2332, 0.2742)
EXPERIMENT1_GOLDEN_TOL = 1e-3

SENSITIVITY_P_HAT = (0.10, 0.20, 0.30, 0.40)
SENSITIVITY_Q = 2.0
SENSITIVITY_EPS_GRID = (0.00, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30)

BOUNDARY_Q1_P_HAT = (0.00, 0.07, 0.465, 0.465)
BOUNDARY_Q1_EPSILON = 0.3
BOUNDARY_Q1_GOLDEN_X = (0.11, 0.11, 0.39, 0.39)

BOUNDARY_QINF_P_HAT = (0.0, 0.2, 0.3, 0.5)
BOUNDARY_QINF_EPSILON = 0.2
BOUNDARY_QINF_GOLDEN_X = (0.20, 0.25, 0.25, 0.30)

BOUNDARY_GOLDEN_TOL = 1e-2
DUALITY_GAP_TOL = 1e-4
TIE_TOL = 1e-6

# Report file names
EXPERIMENT1_STEM = "experiment1"
SWEEP_STEM = "sweep"
BOUNDARY_STEM = "boundary"
REPORT_FORMATS = ("json", "csv", "svg")
