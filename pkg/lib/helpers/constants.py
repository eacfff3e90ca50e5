from enum import Enum


class PotentialKinds(str, Enum):
    POLYNOMIAL_RADIAL = 'polynomial_radial'
    POLYNOMIAL_ANISO = 'polynomial_aniso'
    BOUNDED_WELL = 'bounded_well'
    TABULATED = 'tabulated'


class Assumptions(str, Enum):
    GROWTH = 'A'
    BOUNDED = 'B'


class SensorKinds(str, Enum):
    DECAYING_BALLS = 'decaying_balls'
    DENSITY_RANDOM = 'density_random'
    THICK_PERIODIC = 'thick_periodic'


class ThickPatterns(str, Enum):
    LEFT_SLAB = 'left_slab'
    ALTERNATING = 'alternating'


class SweepVariables(str, Enum):
    LAMBDA = 'lambda'
    MU = 'mu'
    DELTA = 'delta'


class Stages(str, Enum):
    EIG = 'eig'
    SPECINEQ = 'specineq'
    SWEEP = 'sweep'
    LIFT = 'lift'
    OBSERVABILITY = 'observability'
    CONTROL = 'control'


# Matrix dimension up to which the dense symmetric solver is used
DENSE_LIMIT = 4096
# Relative eigenvalue gap below which modes are treated as one degenerate cluster
CLUSTER_GAP = 1e-8
ORTHONORMAL_TOL = 1e-10
RESIDUAL_TOL = 1e-6
GRAM_JITTER = 1e-12
SERIES_THRESHOLD = 1e-8
MIN_FIT_SAMPLES = 4
MIN_TIME_NODES = 32

CACHE_FORMAT = b"SPECLAB-EIGBASIS"
CACHE_VERSION = 1
CACHE_ENV_VAR = "SPECLAB_CACHE_DIR"
RLE_FORMAT = "speclab-mask-rle"
RLE_VERSION = 1

# Independent random streams per stage, combined with the experiment seed
SEED_STREAMS = {'lift': 1, 'observability': 2, 'control': 3}
