LOGGER_MAIN = "quasilocal"
LOGGER_CASE_FILE_PATTERN = "case_{case_name}_{timestamp}.log"
LOGGER_SESSION_FILE_PATTERN = "session_{timestamp}.log"
LOG_DIR = "logs"
TEST_CASES_DIR = '../../test-cases'
CASE_TEMPLATE_SUFFIX = 'example.json'

SCHEMA_VERSION = "1.0"
FLOAT_FORMAT = "%.17g"
ENV_PREFIX = "QUASILOCAL_"

MAX_SUBDIVISIONS = 8
CURVATURE_MARGIN = 1e-8
EMBED_TOL = 1e-8
HAT_EMBED_TOL = 1e-13
PICARD_CONTRACTION = 0.9
NEWTON_TOL = 1e-9
KERNEL_TOL = 1e-2
KERNEL_WARN = 1e-1
CONTINUATION_MIN_STEP = 1e-4
DENSE_EIGEN_LIMIT = 1200
DIRECTION_SAMPLE_SUBDIVISIONS = 3

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2
