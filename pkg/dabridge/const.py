# SPDX-FileCopyrightText: 2024 dabridge contributors
# SPDX-License-Identifier: Apache-2.0

"""Constants for dabridge."""

# Base component constants
NAME = "Dual-approx Bridge"
DOMAIN = "dabridge"
VERSION = "0.1.0"

# Time clamp for the continuous-time singular operators
EPS_T = 1e-9

# Composite trapezoid panels for general g(t)
QUADRATURE_PANELS = 4096

# Divergence guard for training
MAX_LOSS = 1e6

# Loss is reported every LOG_EVERY optimizer steps
LOG_EVERY = 100

# Metrics
PSNR_CAP = 99.0
DEFAULT_PEAK = 1.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_MIN_SIDE = 4

# Samplers
SAMPLER_DUAL = "dual"
SAMPLER_DUAL_EQ43 = "dual-eq43"
SAMPLER_SDE = "sde"
SAMPLER_PF_ODE = "pf-ode"
SAMPLER_KINDS = [SAMPLER_DUAL, SAMPLER_DUAL_EQ43, SAMPLER_SDE, SAMPLER_PF_ODE]
MIN_DUAL_STEPS = 3
MIN_SDE_STEPS = 2

# Approximators
KIND_MLP = "mlp"
KIND_ANALYTIC_FORWARD = "analytic-forward"
KIND_ANALYTIC_REVERSE = "analytic-reverse"
KIND_ANALYTIC_POSTERIOR = "analytic-posterior"
KIND_TAGS = {
    KIND_MLP: 1,
    KIND_ANALYTIC_FORWARD: 2,
    KIND_ANALYTIC_REVERSE: 3,
    KIND_ANALYTIC_POSTERIOR: 4,
}

ROLE_FORWARD = "forward"
ROLE_REVERSE = "reverse"
ROLE_BOTH = "both"
ROLES = [ROLE_FORWARD, ROLE_REVERSE]
ROLE_TAGS = {ROLE_FORWARD: 1, ROLE_REVERSE: 2}

ACTIVATION_TANH = "tanh"
ACTIVATION_RELU = "relu"
ACTIVATIONS = [ACTIVATION_TANH, ACTIVATION_RELU]
ACTIVATION_TAGS = {ACTIVATION_TANH: 1, ACTIVATION_RELU: 2}

EMBEDDING_SCALAR = "scalar-append"
EMBEDDING_SINUSOIDAL = "sinusoidal"
EMBEDDINGS = [EMBEDDING_SCALAR, EMBEDDING_SINUSOIDAL]
EMBEDDING_TAGS = {EMBEDDING_SCALAR: 1, EMBEDDING_SINUSOIDAL: 2}

# Optimizers and losses
OPTIMIZER_SGD = "sgd"
OPTIMIZER_ADAM = "adam"
OPTIMIZERS = [OPTIMIZER_SGD, OPTIMIZER_ADAM]
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOSS_L2 = "l2-squared"
LOSS_L1 = "l1"
LOSS_NORMS = [LOSS_L2, LOSS_L1]

# Datasets
TASK_GAUSSIAN = "gaussian"
TASK_TWOMOONS = "twomoons"
TASK_BLUR = "blur"
TASKS = [TASK_GAUSSIAN, TASK_TWOMOONS, TASK_BLUR]

PADDING_WRAP = "wrap"
PADDING_NEAREST = "nearest"
PADDINGS = [PADDING_WRAP, PADDING_NEAREST]

MIN_SIDE = 4
MAX_SIDE = 32

# Affine squash used by the two-moons pairing: y = scale * x0 + shift
TWOMOONS_SCALE = 0.5
TWOMOONS_SHIFT = (0.25, -0.125)

# Named RNG substreams
STREAM_DATA = "data"
STREAM_INIT = "init"
STREAM_TRAIN = "train"
STREAM_SAMPLE = "sample"

# Binary formats
DATASET_MAGIC = b"DABT"
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b"DABR"
CHECKPOINT_VERSION = 1

# Environment
ENV_THREADS = "DABRIDGE_THREADS"

# Output layout
DIR_DATA = "data"
DIR_CKPT = "ckpt"
DIR_RUNS = "runs"
DIR_TABLES = "tables"
MANIFEST_FILE = "run.txt"

CSV_HEADER = [
    "sampler",
    "steps",
    "trial",
    "psnr_db",
    "ssim",
    "std",
    "mean_gap",
    "cov_gap",
]
SUMMARY_HEADER = [
    "sampler",
    "steps",
    "trials",
    "psnr_mean",
    "psnr_std",
    "ssim_mean",
    "ssim_std",
    "std",
]
LOSS_CURVE_HEADER = ["step", "loss", "wall_ms"]

# Config
CONF_BATCH_SIZE = "batch_size"
CONF_STEPS = "steps"
CONF_LEARNING_RATE = "learning_rate"
CONF_OPTIMIZER = "optimizer"
CONF_LOSS_NORM = "loss_norm"
CONF_SEED = "seed"
CONF_T = "T"

CONF_HIDDEN = "hidden"
CONF_ACTIVATION = "activation"
CONF_TIME_EMBEDDING = "time_embedding"
CONF_FREQUENCIES = "frequencies"
CONF_CONDITIONAL = "conditional"
CONF_INIT_SEED = "init_seed"
CONF_ZERO_FINAL = "zero_final"

CONF_COMMAND = "command"
CONF_TASK = "task"
CONF_SAMPLER = "sampler"
CONF_TRIALS = "trials"
CONF_OUT = "out"
CONF_STEP_LIST = "step_list"
CONF_N = "n"
CONF_DIM = "dim"
CONF_SIDE = "side"
CONF_BLUR_RADIUS = "blur_radius"
CONF_PADDING = "padding"
CONF_NOISE_STD = "noise_std"
CONF_HELDOUT = "heldout"

COMMAND_GEN_DATA = "gen-data"
COMMAND_TRAIN = "train"
COMMAND_SAMPLE = "sample"
COMMAND_EVAL = "eval"
COMMAND_SWEEP = "sweep"
COMMAND_REPRO_TABLE = "repro-table"
COMMANDS = [
    COMMAND_GEN_DATA,
    COMMAND_TRAIN,
    COMMAND_SAMPLE,
    COMMAND_EVAL,
    COMMAND_SWEEP,
    COMMAND_REPRO_TABLE,
]

# Defaults
DEFAULT_T = 200
DEFAULT_BATCH_SIZE = 64
DEFAULT_STEPS = 2000
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_OPTIMIZER = OPTIMIZER_ADAM
DEFAULT_LOSS_NORM = LOSS_L2
DEFAULT_SEED = 0
DEFAULT_HIDDEN = [64, 64]
DEFAULT_ACTIVATION = ACTIVATION_TANH
DEFAULT_TIME_EMBEDDING = EMBEDDING_SCALAR
DEFAULT_FREQUENCIES = 4
DEFAULT_CONDITIONAL = False
DEFAULT_TRIALS = 5
DEFAULT_THREADS = 1
DEFAULT_STEP_LIST = [3, 10, 200]
DEFAULT_SIDE = 8
DEFAULT_BLUR_RADIUS = 1
DEFAULT_N = 512
DEFAULT_HELDOUT = 32
DEFAULT_NOISE_STD = 0.05
DEFAULT_DIM = 1
DEFAULT_MU0 = 0.0
DEFAULT_SIGMA0 = 1.0
DEFAULT_OFFSET = 2.0

STARTUP_MESSAGE = f"""
-------------------------------------------------------------------
{NAME}
Version: {VERSION}
Seeded desk-scale bridge experiments; see --help for the commands.
-------------------------------------------------------------------
"""
