"""skcov constants."""

import pint

units = pint.UnitRegistry()

# Exact enumeration caps
EXACT_CAP = 24
EXACT_FOUR_POINT_CAP = 14
OVERLAP_PMF_CAP = 13
BRUTEFORCE_CAP = 4
GRAY_BLOCK_SIZE = 1 << 14

# Markov chain defaults
DEFAULT_BATCH_COUNT = 20
DEFAULT_BURN_IN_FRACTION = 0.1
DEFAULT_REPLICAS = 4
DEFAULT_SWEEPS = 20000
DEFAULT_THIN = 1
CHUNK_PROPOSALS = 1 << 20
SWAP_RATE_BOUNDS = (0.05, 0.95)
BURN_IN_DRIFT_Z = 4.0

# Spectral defaults
JACOBI_TOLERANCE = 1e-12
JACOBI_MAX_SWEEPS = 100
POWER_TOLERANCE = 1e-10
POWER_MIN_ITERATIONS = 100

# Experiment defaults
DEFAULT_DERIV_STEP = 1e-5
DEFAULT_LOWTEMP_RATIO = 1.15
DEFAULT_OPNORM_VARIATION = 0.15
DEFAULT_RESIDUAL_TOLERANCE = 0.20
DEFAULT_SAMPLES = 200
DEFAULT_SCHEDULE_EXPONENT = 0.25
DEFAULT_SEED = 42
DEFAULT_Z_THRESHOLD = 4.0
DERIV_TOLERANCE = 1e-6
CI95_Z = 1.96

ENV_THREADS = "SKCOV_THREADS"

EVENT_CELL_COMPLETE = "cell_complete"
EVENT_INSTANCE_COMPLETE = "instance_complete"

REPORT_JSON = "report.json"
REPORT_CSV = "table.csv"
REPORT_CSV_COLUMNS = (
    "kind",
    "n",
    "beta",
    "statistic",
    "count",
    "mean",
    "stderr",
    "predictor",
    "z_or_flag",
)

UNIT_DIMENSIONLESS = units.dimensionless
UNIT_SECONDS = units.sec

# Validation thresholds
MIN_COVERAGE = 0.95
MONOTONE_STDERRS = 2.0
