"""Default parameters shared across the fuzzing pipeline."""

import math

# Simulation
DT = 0.1
MAX_STEPS = 500
EGO_HALF_EXTENTS = (2.4, 1.0)
EGO_WHEELBASE = 2.8
EGO_MAX_STEER = 0.6
EGO_CRUISE_SPEED = 8.0
EGO_INITIAL_SPEED = 0.0
FOV_HALF_ANGLE = math.radians(60.0)
SENSING_RANGE = 30.0
MAX_ACCEL = 3.0
MAX_BRAKE = 8.0
REACTION_DELAY = 0.3
COMFORT_DECEL = 4.0
COMFORT_LATERAL_ACCEL = 3.0
LATERAL_GRIP = 7.0
STANDSTILL_GAP = 2.0
SPEED_GAIN = 2.0
LOOKAHEAD_MIN = 4.0
LOOKAHEAD_GAIN = 0.6
GOAL_TOLERANCE = 3.0
CORRIDOR_MARGIN = 0.5
MIN_IMPACT_SPEED = 0.1
COLLISION_VIEW_WINDOW = 1.0
AVOID_HORIZON = 1.0
PEDESTRIAN_HALF_EXTENT = 0.4
PEDESTRIAN_MAX_ACCEL = 2.0
NPC_MAX_YAW_RATE = 0.8
ROUTE_SPACING = 1.0
MAP_RESOLUTION = 0.25

# Weather modes: (name, friction factor, sensing factor)
WEATHER_MODES = [
    ("ClearNoon", 1.00, 1.00),
    ("CloudyNoon", 1.00, 0.95),
    ("WetNoon", 0.85, 0.95),
    ("WetCloudyNoon", 0.80, 0.90),
    ("MidRainyNoon", 0.75, 0.85),
    ("HardRainNoon", 0.65, 0.75),
    ("SoftRainNoon", 0.85, 0.90),
    ("ClearSunset", 1.00, 0.85),
    ("CloudySunset", 1.00, 0.82),
    ("WetSunset", 0.85, 0.82),
    ("WetCloudySunset", 0.80, 0.80),
    ("MidRainSunset", 0.75, 0.78),
    ("HardRainSunset", 0.60, 0.72),
    ("SoftRainSunset", 0.85, 0.80),
    ("ClearNight", 1.00, 0.75),
    ("CloudyNight", 1.00, 0.72),
    ("WetNight", 0.85, 0.72),
    ("WetCloudyNight", 0.80, 0.70),
    ("MidRainyNight", 0.75, 0.70),
    ("HardRainNight", 0.60, 0.70),
    ("SoftRainNight", 0.85, 0.70),
]

# Half extents (length, width) per vehicle type index
VEHICLE_HALF_EXTENTS = [
    (2.3, 0.95),  # compact
    (2.4, 1.00),  # sedan
    (2.5, 1.00),  # coupe
    (2.6, 1.05),  # hatchback wagon
    (2.4, 1.05),  # suv
    (2.8, 1.10),  # pickup
    (3.0, 1.10),  # van
    (4.0, 1.30),  # truck
    (1.1, 0.45),  # motorbike
    (0.9, 0.35),  # bicycle
    (2.2, 0.90),  # microcar
]

# Half extents per static object type index
STATIC_HALF_EXTENTS = [
    (0.4, 0.4),  # barrel
    (0.5, 0.5),  # box
    (1.0, 0.3),  # barrier
    (0.9, 0.35),  # parked bicycle
    (2.4, 1.0),  # parked car
]

# Genetic search
POP_SIZE = 50
MAX_GEN = 10_000
ETA_CROSSOVER = 5.0
P_CROSSOVER = 0.8
MUTATION_RATE_FACTOR = 5.0
ETA_MUTATION = 5.0
CANDIDATE_MULTIPLIER = 5
MAX_MATING_ITER = 5
GENERATION_TO_USE_NN = 0
SAMPLE_MAX_ATTEMPTS = 1000

# Surrogate classifier
HIDDEN_SIZE = 150
EPOCHS = 30
BATCH_SIZE = 200
LEARNING_RATE = 0.01
TH_CONF2 = 0.9
GRAD_STEPS = 255
GRAD_STEP_SIZE = 1.0 / 255.0
GRAD_EPSILON = 1.0
PROJECTION_TOL = 1e-9
PROJECTION_MAX_SWEEPS = 10_000

# Uniqueness
TH1 = 10.0
TH2 = 50.0
CONSTRAINT_TOL = 1e-9

# Baselines
REGRESSION_HIDDEN_SIZE = 100
REGRESSION_EPOCHS = 200
PRETRAIN_BUDGET = 1000
DT_OUTER_ITERS = 5
DT_MIN_SAMPLES_SPLIT = 0.10
DT_MIN_IMPURITY_DECREASE = 0.0001
AVFUZZER_POP_SIZE = 4
AVFUZZER_LOCAL_COPIES = 4
AVFUZZER_LOCAL_GENERATIONS = 5
AVFUZZER_STAGNATION_WINDOW = 5

# Campaign
SEED_METHOD = "GA-UN"
SEED_BUDGET = 500
BOOTSTRAP_RESAMPLES = 10_000
SWEEP_TH2 = (5.0, 10.0, 20.0)
SWEEP_TH1 = (25.0, 50.0, 75.0)

# Plotting
PALETTE = [
    "#4C78A8",
    "#E45756",
    "#72B7B2",
    "#F28E2B",
    "#59A14F",
    "#B279A2",
    "#FF9DA6",
    "#9C755F",
]
KIND_COLORS = {
    "ego": "#F28E2B",
    "npc_vehicle": "#59A14F",
    "pedestrian": "#E45756",
    "static": "#9C755F",
}
DISTANCE_CAP = 100.0
