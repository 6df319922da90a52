"""Shared geometry, colour, and tuning constants.

The world is a 1 m x 1 m tabletop seen from above.  All lengths are in
metres, all angles in degrees.  Pixel space is row-major with row 0 at
world y = 0; the top STRIP_ROWS pixel rows are a gripper status strip
drawn over the scene, not part of the table surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

# --- table and camera ---------------------------------------------------

WORLD_EXTENT = (1.0, 1.0)           # (x, y) metres covered by the image
REACH_RECT = (0.1, 0.1, 0.9, 0.9)   # xmin, ymin, xmax, ymax the arm can reach
STRIP_ROWS = 3                      # pixel rows reserved for the gripper strip
STRIP_HELD_DEPTH = 0.75             # depth-channel value of the strip while holding

# --- object footprints --------------------------------------------------

BLOCK_LENGTH = 0.28                 # long two-tone block, slots on top
BLOCK_WIDTH = 0.07
BLOCK_SLOT_OFFSETS = (-0.10, 0.0, 0.10)   # along the long axis
SUPPORT_SIDE = 0.10                 # square support block, one slot at centre
SUPPORT_HALF_SPAN = 0.05            # stability span along the resting block's axis
CUP_RADIUS = 0.055
CUP_TOPPLED_SEMI = (0.078, 0.039)   # 2:1 ellipse, major axis = topple direction
BALL_RADIUS = 0.04

MASS = {"block": 2.0, "cup": 1.0, "ball": 1.0}

# --- dynamics -----------------------------------------------------------

GRIP_CLEAR_RADIUS = 0.09    # object-free disc required at a commencement point
SNAP_RADIUS = 0.05          # how far an executed action may sit from the true point
ROLL_DISTANCE = 0.15        # how far a disturbed ball travels
TOPPLE_SHIFT = 0.03         # sideways displacement of a cup knocked over in place
TILT_FALL_SHIFT = 0.08      # extra travel of a cup sliding off a tilting block
SWEEP_PAD = 0.02            # clearance added around the block while it turns
SETTLE_STEP = 0.002         # spatial resolution of the landing search

HEIGHT_UNIT = 0.06          # metres of elevation per stacking level
MAX_LEVEL = 2
DEPTH_PER_LEVEL = 0.25      # depth-channel value per stacking level

# --- palette ------------------------------------------------------------

TABLE_COLOUR = (0.5, 0.5, 0.5)
SUPPORT_COLOUR = (0.10, 0.10, 0.10)
BLOCK_GREEN = (0.15, 0.70, 0.20)     # half toward the orientation vector
BLOCK_YELLOW = (0.90, 0.85, 0.15)
CUP_COLOUR = (0.15, 0.25, 0.90)
CUP_TOPPLED_COLOUR = (0.04, 0.08, 0.38)   # side view reads much darker
BALL_COLOUR = (0.90, 0.10, 0.10)

# --- recognition tuning -------------------------------------------------

COLOUR_TOLERANCE = 0.1      # per-channel window around each class colour
CONFIDENCE_CUTOFF = 0.9
NMS_DIST = 0.025
NMS_ANGLE = 10.0
RECALL_DIST = 0.025
RECALL_ANGLE = 5.0
ELONGATION_TOPPLED = 1.45   # principal-axis ratio separating discs from ellipses
DETECT_GATE_PAD = 0.005     # extra clearance demanded of image-based gating

# --- plan acceptance -----------------------------------------------------

TAU_POS = 0.01   # a positive goal counts as reached below this window MSE
TAU_NEG = 0.02   # a negative goal counts as defeated above this window MSE

# Minimum plausible pixel areas at 32x32, used as confidence denominators.
# Scaled by (resolution/32)^2 at other resolutions.
EXPECTED_AREA_32 = {"ball": 4.0, "cup": 5.0, "support": 8.0, "block": 8.0}


@dataclass(frozen=True)
class NetConfig:
    """Forward-model architecture knobs (sizes follow the 32x32 scale)."""

    resolution: int = 32
    latent: int = 64
    memory: int = 32
    hidden: int = 128
    conv_channels: int = 8
    action_inputs: int = 9
    kinds: tuple[str, ...] = ("grasp", "place", "turn")

    @property
    def grid(self) -> int:
        return self.resolution // 4

    @property
    def flat(self) -> int:
        return self.grid * self.grid * self.conv_channels


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    batch_size: int = 32
    max_batches: int = 20000
    eval_interval: int = 500
    patience: int = 5          # stagnant evaluations before the rate halves
    mask_loss_weight: float = 0.1
    changed_weight: float = 15.0   # extra MSE weight on pixels that truly changed
    mask_bg_weight: float = 4.0    # BCE weight on mask false positives (leak control)
    max_seq_len: int = 4
    translate_px: int = 2
    action_noise: float = 0.01
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    """Knobs shared by the CLI and the planner."""

    resolution: int = 32
    seed: int = 0
    n_max: int = 4
    cutoff: float = CONFIDENCE_CUTOFF
    nms_dist: float = NMS_DIST
    nms_angle: float = NMS_ANGLE
    tau_pos: float = TAU_POS
    tau_neg: float = TAU_NEG
    backend: str = "oracle"
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def with_resolution(self, resolution: int) -> "RunConfig":
        return replace(self, resolution=resolution,
                       net=replace(self.net, resolution=resolution))


def expected_area(kind: str, resolution: int) -> float:
    return EXPECTED_AREA_32[kind] * (resolution / 32.0) ** 2
