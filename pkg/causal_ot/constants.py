# Solver and model constants

# Tolerances
DEFAULT_TOLERANCE = 1e-9
MEMBERSHIP_TOLERANCE = 1e-8
WEIGHT_TOLERANCE = 1e-12
METRIC_TOLERANCE = 1e-12
TIE_TOLERANCE = 1e-12
COLLISION_TOLERANCE = 1e-9
BCD_IMPROVEMENT = 1e-10

# Caps
MAX_ENUMERATION = 10_000_000
MAX_BLOCK_DIM = 6
MAX_SUPPORT = 10_000_000
MAX_EXACT_VARIABLES = 500
LP_MAX_ITERATIONS = 50_000
LP_REFACTOR_EVERY = 50
BCD_MAX_SWEEPS = 100
ENUMERATION_CHUNK = 65_536
ENUMERATION_CELLS = 4_000_000

# Defaults
DEFAULT_RESTARTS = 16
DEFAULT_CAUSAL_RESTARTS = 4
DEFAULT_SEED = 0
DEFAULT_WORKERS = 1

# Environment variables
ENV_WORKERS = 'CAUSAL_OT_WORKERS'
ENV_SEED = 'CAUSAL_OT_SEED'
ENV_RESTARTS = 'CAUSAL_OT_RESTARTS'
ENV_MAX_ENUM = 'CAUSAL_OT_MAX_ENUM'
ENV_TOL = 'CAUSAL_OT_TOL'
ENV_EXACT = 'CAUSAL_OT_EXACT'
CONFIG_SECTION = 'causal_ot'

# Graph classes
FULL = 'Full'
EMPTY = 'Empty'
LINEAR = 'Linear'
MARKOV = 'Markov'
GENERAL = 'General'
GRAPH_PRESETS = {
    'full': FULL,
    'empty': EMPTY,
    'linear': LINEAR,
    'markov': MARKOV,
}

# Coupling classes
ANY = 'Any'
CAUSAL = 'Causal'
BICAUSAL = 'Bicausal'
COUPLING_CLASSES = [ANY, CAUSAL, BICAUSAL]

# Solver statuses
GLOBAL_OPTIMAL = 'GlobalOptimal'
LOCAL_UPPER_BOUND = 'LocalUpperBound'

# Solver methods
METHOD_LP = 'lp'
METHOD_IDENTITY = 'identity'
METHOD_EXHAUSTIVE = 'exhaustive'
METHOD_ELIMINATION = 'elimination'
METHOD_BCD = 'bcd'

# Coordinate metric kinds
METRIC_EUCLIDEAN = 'euclidean'
METRIC_ABSDIFF = 'absdiff'
METRIC_MATRIX = 'matrix'
METRIC_KINDS = [METRIC_EUCLIDEAN, METRIC_ABSDIFF, METRIC_MATRIX]

# Ground cost kinds
COST_ADDITIVE = 'additive'
COST_JOINT = 'joint'
COST_EUCLIDEAN = 'euclidean'
COST_KINDS = [COST_ADDITIVE, COST_JOINT, COST_EUCLIDEAN]

# Constraint family labels
FAMILY_MARGINAL = 'Marginal'
FAMILY_NONNEGATIVITY = 'Nonnegativity'
FAMILY_MARGINAL_ROW = 'MarginalRow'
FAMILY_MARGINAL_COLUMN = 'MarginalColumn'
FAMILY_CAUSAL_MECHANISM = 'CausalMechanism'
FAMILY_ADAPTED_CAUSALITY = 'AdaptedCausality'
FAMILY_CONDITIONAL_INDEPENDENCE = 'ConditionalIndependence'
FAMILY_JOINT_COMPATIBILITY = 'JointCompatibility'

# Bundled data assets
APPENDIX_B_MODEL = 'appendix_b.json'
EXAMPLE_MARKOV_MODEL = 'example_markov.json'
ATE_DISCONTINUITY_MODEL = 'ate_discontinuity.json'

# Reference distances for the bundled triangle counterexample are quoted on twice
# the scale of the normalized (atom weight 1/4) transport cost.
APPENDIX_B_REFERENCE_SCALE = 2
APPENDIX_B_REFERENCE = {
    ('mu', 'nu'): 0.585,
    ('nu', 'eta'): 2.24,
    ('mu', 'eta'): 2.925,
}
APPENDIX_B_TOLERANCE = 1e-6
