"""SE(2) footstep geometry: pose algebra, displacement kinematics, collision tests.

Conventions: angles in radians, wrapped to (-pi, pi]; all poses live in a world
frame attached to the ground unless a function says otherwise. Displacements are
expressed in the support-foot frame using the canonical right-support convention;
the lateral/rotational sign flip for left support happens inside
``apply_displacement``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi

# Displacements whose ellipsoid radius is within this slack of 1 count as
# feasible; keeps clip_to_feasible exactly idempotent under float rounding.
_CLIP_SLACK = 1e-12


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


class Foot(enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    def mirror(self) -> "Foot":
        return Foot.RIGHT if self is Foot.LEFT else Foot.LEFT


@dataclass(frozen=True, slots=True)
class Pose2:
    """A planar pose (x, y, theta); theta is wrapped to (-pi, pi] on creation."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True, slots=True)
class Footstep:
    foot: Foot
    pose: Pose2


@dataclass(frozen=True, slots=True)
class Displacement:
    """Swing-foot placement (dx, dy, dtheta) relative to the support foot.

    dy is measured from the nominal lateral offset between the feet, so the
    zero displacement puts the swing foot at its resting position.
    """

    dx: float
    dy: float
    dtheta: float


@dataclass(frozen=True, slots=True)
class FeasibleSet:
    """Ellipsoidal displacement bounds, with an asymmetric forward/backward x axis."""

    dx_fwd_max: float
    dx_bwd_max: float
    dy_max: float
    dtheta_max: float

    def __post_init__(self):
        if min(self.dx_fwd_max, self.dx_bwd_max, self.dy_max, self.dtheta_max) <= 0.0:
            raise ValueError("feasible-set bounds must be strictly positive")


@dataclass(frozen=True, slots=True)
class RobotSpec:
    """Foot dimensions and displacement limits of a bipedal platform."""

    foot_length: float
    foot_width: float
    f_dist: float
    feasible: FeasibleSet

    def __post_init__(self):
        if self.foot_length <= 0.0 or self.foot_width <= 0.0:
            raise ValueError("foot dimensions must be strictly positive")
        if self.f_dist <= self.foot_width:
            raise ValueError("f_dist must exceed foot_width so the feet do not overlap")


@dataclass(frozen=True, slots=True)
class Obstacle:
    """Circular obstacle; rho == 0 is the sentinel for 'no obstacle'."""

    x: float
    y: float
    rho: float

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError("obstacle radius must be non-negative")


def default_robot_spec() -> RobotSpec:
    """Kid-size humanoid parameters: 0.14 x 0.08 m feet, 0.15 m stance width,
    0.08/0.03 m forward/backward reach, 0.04 m lateral, 20 degree rotation."""
    return RobotSpec(
        foot_length=0.14,
        foot_width=0.08,
        f_dist=0.15,
        feasible=FeasibleSet(
            dx_fwd_max=0.08,
            dx_bwd_max=0.03,
            dy_max=0.04,
            dtheta_max=math.radians(20.0),
        ),
    )


def se2_compose(a: Pose2, b: Pose2) -> Pose2:
    """Pose of b expressed through frame a (rigid transform composition)."""
    c = math.cos(a.theta)
    s = math.sin(a.theta)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def se2_inverse(a: Pose2) -> Pose2:
    """Inverse transform: se2_compose(a, se2_inverse(a)) is the identity."""
    c = math.cos(a.theta)
    s = math.sin(a.theta)
    return Pose2(-(c * a.x + s * a.y), -(-s * a.x + c * a.y), -a.theta)


def to_frame(world: Pose2, ref: Pose2) -> Pose2:
    """Re-express a world pose in the frame of ``ref``."""
    return se2_compose(se2_inverse(ref), world)


def point_to_frame(x: float, y: float, ref: Pose2) -> tuple[float, float]:
    """Re-express a world point in the frame of ``ref``."""
    c = math.cos(ref.theta)
    s = math.sin(ref.theta)
    dx = x - ref.x
    dy = y - ref.y
    return (c * dx + s * dy, -s * dx + c * dy)


def apply_symmetry(support: Foot, value: float) -> float:
    """Lateral sign flip that folds left-support situations onto right-support ones."""
    return value if support is Foot.RIGHT else -value


def displacement_radius(d: Displacement, fs: FeasibleSet) -> float:
    """Normalized ellipsoid radius of a displacement; feasible iff <= 1."""
    nx = d.dx / (fs.dx_fwd_max if d.dx >= 0.0 else fs.dx_bwd_max)
    ny = d.dy / fs.dy_max
    nt = d.dtheta / fs.dtheta_max
    return math.sqrt(nx * nx + ny * ny + nt * nt)


def is_feasible(d: Displacement, fs: FeasibleSet, slack: float = 1e-9) -> bool:
    return displacement_radius(d, fs) <= 1.0 + slack


def clip_to_feasible(d: Displacement, fs: FeasibleSet) -> Displacement:
    """Project a displacement into the feasible ellipsoid.

    Radial projection: directions are preserved, only the magnitude shrinks.
    The sign of dx selects the forward or backward semi-axis, and scaling by
    1/r keeps that sign, so the same semi-axis stays active. Idempotent.
    """
    r = displacement_radius(d, fs)
    if r <= 1.0 + _CLIP_SLACK:
        return d
    inv = 1.0 / r
    return Displacement(d.dx * inv, d.dy * inv, d.dtheta * inv)


def apply_displacement(support: Footstep, d: Displacement, spec: RobotSpec) -> Footstep:
    """Place the swing foot, producing the next support footstep.

    The displacement is interpreted in the canonical right-support convention;
    for a left support foot the lateral offset and rotation are sign-flipped so
    one action mirrors exactly between the two sides.
    """
    s = 1.0 if support.foot is Foot.RIGHT else -1.0
    local = Pose2(d.dx, s * (spec.f_dist + d.dy), s * d.dtheta)
    return Footstep(support.foot.mirror(), se2_compose(support.pose, local))


def footstep_collides(f: Footstep, o: Obstacle, spec: RobotSpec) -> bool:
    """True iff the oriented foot rectangle intersects the obstacle disk.

    The obstacle center is transformed into the foot frame, clamped to the
    rectangle half-extents, and the clamped point is compared against rho.
    A zero-radius obstacle never collides (disabled obstacle sentinel).
    """
    if o.rho <= 0.0:
        return False
    lx, ly = point_to_frame(o.x, o.y, f.pose)
    hx = 0.5 * spec.foot_length
    hy = 0.5 * spec.foot_width
    cx = min(max(lx, -hx), hx)
    cy = min(max(ly, -hy), hy)
    return math.hypot(lx - cx, ly - cy) <= o.rho


def pose_error(current: Footstep, target: Footstep) -> tuple[float, float]:
    """(position distance, absolute wrapped orientation error in [0, pi])."""
    dp = math.hypot(current.pose.x - target.pose.x, current.pose.y - target.pose.y)
    dt = abs(wrap_angle(current.pose.theta - target.pose.theta))
    return dp, dt


def mirror_pose(p: Pose2) -> Pose2:
    """Reflect a pose about the x axis."""
    return Pose2(p.x, -p.y, -p.theta)


def mirror_footstep(f: Footstep) -> Footstep:
    """Reflect a footstep about the x axis, swapping the foot label."""
    return Footstep(f.foot.mirror(), mirror_pose(f.pose))


@lru_cache(maxsize=None)
def max_step_distance(spec: RobotSpec, samples: int = 1_000_000, seed: int = 0) -> float:
    """Conservative upper bound on the support-position jump of one footstep.

    Sampled numerically: the largest in-plane offset of the swing foot from its
    resting position over feasible displacements, plus the stance width that the
    support swap itself contributes.
    """
    fs = spec.feasible
    rng = np.random.default_rng(seed)
    dx = rng.uniform(-fs.dx_bwd_max, fs.dx_fwd_max, samples)
    dy = rng.uniform(-fs.dy_max, fs.dy_max, samples)
    dt = rng.uniform(-fs.dtheta_max, fs.dtheta_max, samples)
    nx = dx / np.where(dx >= 0.0, fs.dx_fwd_max, fs.dx_bwd_max)
    r = np.sqrt(nx**2 + (dy / fs.dy_max) ** 2 + (dt / fs.dtheta_max) ** 2)
    scale = np.minimum(1.0, 1.0 / np.maximum(r, 1e-300))
    reach = np.hypot(dx * scale, dy * scale)
    return float(reach.max()) + spec.f_dist
