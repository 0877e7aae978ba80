"""Spherical camera poses, rigid transforms, se(3) twists, and error measures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi

ORTHO_TOL = 1e-9


class DegeneratePoseError(ValueError):
    """Raised when a pose sits at a pole and the look-at frame is undefined."""


class LogMapAmbiguityError(ValueError):
    """Raised when log_map is called on a rotation of angle pi (axis sign ambiguous)."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    w = a % TAU
    if w > math.pi:
        w -= TAU
    return w


def wrap_angles(a) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float), TAU)
    return np.where(w > math.pi, w - TAU, w)


@dataclass(frozen=True)
class SphericalPose:
    """Camera position in object-centered spherical coordinates.

    theta: latitude in radians, measured from the equatorial plane.
    phi:   longitude in radians, stored wrapped to [0, 2*pi).
    rho:   radial distance on the object-normalized scale, > 0.
    """

    theta: float
    phi: float
    rho: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.theta, self.phi, self.rho))):
            raise ValueError("pose components must be finite")
        if abs(self.theta) > math.pi / 2:
            raise ValueError(f"latitude out of [-pi/2, pi/2]: {self.theta}")
        if self.rho <= 0:
            raise ValueError(f"radius must be positive: {self.rho}")
        object.__setattr__(self, "phi", float(self.phi % TAU))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.rho], dtype=float)


@dataclass(frozen=True)
class RelPose:
    """Pose delta (query minus reference) in spherical coordinates.

    dphi is stored wrapped to (-pi, pi].
    """

    dtheta: float
    dphi: float
    drho: float

    def __post_init__(self):
        if not all(map(math.isfinite, (self.dtheta, self.dphi, self.drho))):
            raise ValueError("pose delta components must be finite")
        object.__setattr__(self, "dphi", float(wrap_angle(self.dphi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.dtheta, self.dphi, self.drho], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "RelPose":
        a = np.asarray(arr, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def relative_pose(ref: SphericalPose, query: SphericalPose) -> RelPose:
    """Componentwise query-minus-reference delta with shorter-arc longitude."""
    return RelPose(
        query.theta - ref.theta,
        wrap_angle(query.phi - ref.phi),
        query.rho - ref.rho,
    )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """World-to-camera rigid transform: x_cam = rotation @ x_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if np.linalg.norm(r.T @ r - np.eye(3)) > 1e-6:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: x -> self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


def spherical_to_cartesian(p: SphericalPose) -> np.ndarray:
    ct = math.cos(p.theta)
    return p.rho * np.array(
        [ct * math.cos(p.phi), ct * math.sin(p.phi), math.sin(p.theta)]
    )


def pose_to_transform(p: SphericalPose, pole_tol: float = 1e-9) -> RigidTransform:
    """Look-at extrinsic for a spherical pose: camera aims at the origin, world up +z.

    Raises DegeneratePoseError at |theta| = pi/2, where the up vector is parallel
    to the viewing direction.
    """
    center = spherical_to_cartesian(p)
    z_axis = -center / np.linalg.norm(center)
    up = np.array([0.0, 0.0, 1.0])
    x_axis = np.cross(up, z_axis)
    nx = np.linalg.norm(x_axis)
    if nx < pole_tol:
        raise DegeneratePoseError(f"look-at frame undefined at theta={p.theta}")
    x_axis = x_axis / nx
    y_axis = np.cross(z_axis, x_axis)
    rotation = np.stack([x_axis, y_axis, z_axis])
    return RigidTransform(rotation, -rotation @ center)


def _skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _vee(m: np.ndarray) -> np.ndarray:
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


@dataclass(frozen=True, eq=False)
class Twist:
    """se(3) element: omega is the rotational part, nu the translational part."""

    omega: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "nu", np.asarray(self.nu, dtype=float))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.omega, self.nu])


def _rot_coeffs(angle: float) -> tuple[float, float, float]:
    # Rodrigues coefficients A, B plus the left-Jacobian coefficient C, with
    # series fallbacks below angle ~ 1e-6 to avoid 0/0.
    if angle < 1e-6:
        a2 = angle * angle
        return 1.0 - a2 / 6.0, 0.5 - a2 / 24.0, 1.0 / 6.0 - a2 / 120.0
    a = math.sin(angle) / angle
    b = (1.0 - math.cos(angle)) / (angle * angle)
    c = (angle - math.sin(angle)) / (angle ** 3)
    return a, b, c


def exp_map(xi: Twist) -> RigidTransform:
    """Closed-form exponential: Rodrigues rotation plus left-Jacobian translation."""
    omega = xi.omega
    angle = float(np.linalg.norm(omega))
    w = _skew(omega)
    w2 = w @ w
    a, b, c = _rot_coeffs(angle)
    rotation = np.eye(3) + a * w + b * w2
    v = np.eye(3) + b * w + c * w2
    return RigidTransform(rotation, v @ xi.nu)


def log_map(t: RigidTransform, pi_tol: float = 1e-9) -> Twist:
    """Inverse of exp_map; rejects rotations within pi_tol of angle pi."""
    r = t.rotation
    cos_angle = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = math.acos(cos_angle)
    if angle > math.pi - pi_tol:
        raise LogMapAmbiguityError("rotation angle at pi: axis sign is ambiguous")
    # vee(R - R^T) = 2 sin(angle) * axis
    if angle < 1e-8:
        omega = 0.5 * _vee(r - r.T)
    else:
        omega = _vee(r - r.T) * (0.5 * angle / math.sin(angle))
    w = _skew(omega)
    w2 = w @ w
    if angle < 1e-6:
        v_inv = np.eye(3) - 0.5 * w + (1.0 / 12.0) * w2
    else:
        coef = (1.0 / (angle * angle)) * (
            1.0 - (angle * math.sin(angle)) / (2.0 * (1.0 - math.cos(angle)))
        )
        v_inv = np.eye(3) - 0.5 * w + coef * w2
    return Twist(omega, v_inv @ t.translation)


def _as_transform(p) -> RigidTransform:
    if isinstance(p, RigidTransform):
        return p
    if isinstance(p, SphericalPose):
        return pose_to_transform(p)
    raise TypeError(f"expected SphericalPose or RigidTransform, got {type(p)}")


def rotation_error(a, b) -> float:
    """Geodesic angle between the rotations of two poses, in [0, pi]."""
    ra = _as_transform(a).rotation
    rb = _as_transform(b).rotation
    cos_angle = np.clip((np.trace(ra.T @ rb) - 1.0) / 2.0, -1.0, 1.0)
    return float(math.acos(cos_angle))


def translation_error(a, b) -> float:
    """Euclidean distance between camera centers on the object-normalized scale."""
    ca = _as_transform(a).camera_center()
    cb = _as_transform(b).camera_center()
    return float(np.linalg.norm(ca - cb))


def rel_as_pose(x: RelPose) -> SphericalPose:
    """Canonical embedding of a pose delta as an absolute pose for error metrics.

    Valid only when drho > 0 (the two-view sampling box keeps drho in [1.2, 2]).
    """
    return SphericalPose(x.dtheta, x.dphi % TAU, x.drho)
