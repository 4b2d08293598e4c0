from pathlib import Path

# Output Paths
OUTPUT_DIR = Path('./runs')
DEMOS_FILE = 'demos.sag'
POLICY_FILE = 'policy.sag'
PRUNER_FILE = 'pruner.sag'
RESOLVED_CONFIG_FILE = 'resolved_config.txt'

# File Magics
POLICY_MAGIC = b'SAGPOLv1'
PRUNER_MAGIC = b'SAGPRNv1'
DATASET_MAGIC = b'SAGDATv1'

# Policy Architecture (desk scale)
DEFAULT_K = 10
DEFAULT_L = 4
DEFAULT_D_MODEL = 64
DEFAULT_N_HEADS = 4
HORIZON = 8
ACTION_DIM = 2
OBS_DIM = 8
REUSE_STRATEGY = 'one_for_all'
CLIP_SAMPLE = 1.0

# Pruner Architecture
D_POS = 16
D_ENC = 32
ENC_LAYERS = 2
ENC_HEADS = 4
D_OBS = 32
HEAD_HIDDEN = 64
COORDINATE_ENCODING = 'sinusoidal'
PRUNER_HEAD_INIT_SCALE = 1.0
PRUNER_LOGIT_SCALE = 10.0

# Pruner Training
TARGET_RATE = 0.91
SPARSITY_WEIGHT = 1.0
LEARNING_RATE = 1e-4
BATCH_SIZE = 32
EPOCHS = 30
WARMUP_STEPS = 4
WEIGHT_DECAY = {
    'obs_encoder': 1e-4,
    'coord_encoder': 1e-3,
    'head': 1e-5,
}
REFERENCE_FRACTION = 0.05
SPARSITY_SCOPE = 'global'
SPARSITY_GATE = 'soft'

# Policy Pretraining
POLICY_LEARNING_RATE = 1e-3
POLICY_BATCH_SIZE = 64
POLICY_EPOCHS = 40
POLICY_WARMUP_STEPS = 100
POLICY_WEIGHT_DECAY = 1e-6

# Environment
DT = 0.05
MAX_ITERATIONS = 24
SUCCESS_RADIUS = 0.08
GRASP_RADIUS = 0.05
OBSTACLE_RADIUS = 0.3
EXPERT_GAIN = 5.0
WAYPOINT_X = 0.05
WAYPOINT_Y = 0.55
N_DEMO_EPISODES = 1200
VALIDATION_FRACTION = 0.12

# Evaluation
DEFAULT_SEEDS = (0, 1, 2)
EVAL_EPISODES = 50
EVAL_WORKERS = 4
RANDOM_SCHEDULE_RATE = 0.9
UNIFORM_INTERVAL = 7
