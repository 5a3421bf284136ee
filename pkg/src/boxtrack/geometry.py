"""
Pinhole camera model and oriented box geometry.

Boxes are described by nine keypoints: index 0 is the centre and index
``i`` in 1..8 is the corner whose sign bits ``b = i - 1`` select the
half-size offset along each object axis (bit 0 -> x, bit 1 -> y,
bit 2 -> z; a set bit means ``+size/2``). ``KEYPOINT_SIGNS`` is the single
table every module uses for this convention.
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .exceptions import DomainException, EstimationException

NUM_KEYPOINTS = 9

KEYPOINT_SIGNS = np.array(
    [[0.0, 0.0, 0.0]]
    + [
        [
            1.0 if b & 1 else -1.0,
            1.0 if b & 2 else -1.0,
            1.0 if b & 4 else -1.0,
        ]
        for b in range(8)
    ]
)
KEYPOINT_SIGNS.setflags(write=False)

# Corner index pairs (lower, upper) along each object axis.
AXIS_EDGES: Tuple[Tuple[Tuple[int, int], ...], ...] = tuple(
    tuple(
        (1 + b, 1 + (b | (1 << axis)))
        for b in range(8)
        if not b & (1 << axis)
    )
    for axis in range(3)
)
BOX_EDGES: Tuple[Tuple[int, int], ...] = tuple(
    edge for axis_edges in AXIS_EDGES for edge in axis_edges
)

# Counter-clockwise seen from outside, so each face normal points outward.
BOX_FACES: Tuple[Tuple[int, int, int, int], ...] = (
    (2, 4, 8, 6),  # +x
    (1, 5, 7, 3),  # -x
    (3, 7, 8, 4),  # +y
    (1, 2, 6, 5),  # -y
    (5, 6, 8, 7),  # +z
    (1, 3, 4, 2),  # -z
)

ORTHONORMAL_TOL = 1e-9
DEGENERATE_EDGE = 1e-12


def _frozen(values, shape: Tuple[int, ...], name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.shape != shape:
        raise DomainException(
            f"{name} must have shape {shape}, got {array.shape}"
        )
    if not np.all(np.isfinite(array)):
        raise DomainException(f"{name} must be finite")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole projection parameters and viewport size in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise DomainException("Focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise DomainException("Viewport dimensions must be positive")

    @property
    def matrix(self) -> np.ndarray:
        """The 3x3 calibration matrix."""
        return np.array(
            [
                [self.fx, 0.0, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )

    def contains(self, u: float, v: float) -> bool:
        """Whether a pixel coordinate lies inside the viewport."""
        return 0.0 <= u < self.width and 0.0 <= v < self.height


@dataclass(frozen=True, eq=False)
class BoxPose:
    """Oriented box in the camera frame, defined up to a global scale.

    Attributes:
        rotation: Object-to-camera rotation (3x3, proper)
        translation: Box centre in the camera frame
        size: Full edge lengths along the object x, y and z axes
    """

    rotation: np.ndarray
    translation: np.ndarray
    size: np.ndarray

    def __post_init__(self) -> None:
        rotation = _frozen(self.rotation, (3, 3), "rotation")
        translation = _frozen(self.translation, (3,), "translation")
        size = _frozen(self.size, (3,), "size")

        if not np.allclose(
            rotation.T @ rotation, np.eye(3), rtol=0.0, atol=ORTHONORMAL_TOL
        ):
            raise DomainException("rotation must be orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOL:
            raise DomainException("rotation must have determinant +1")
        if np.any(size <= 0):
            raise DomainException("size components must be positive")
        if translation[2] <= 0:
            raise DomainException("box centre must lie in front of camera")

        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        object.__setattr__(self, "size", size)

    def scaled(self, factor: float) -> "BoxPose":
        """Scale translation and size about the camera centre."""
        return BoxPose(
            self.rotation, self.translation * factor, self.size * factor
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BoxPose):
            return NotImplemented
        return (
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and np.array_equal(self.size, other.size)
        )


@dataclass(frozen=True, eq=False)
class KeypointSet2D:
    """The nine projected keypoints of a box, in pixels."""

    points: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "points",
            _frozen(self.points, (NUM_KEYPOINTS, 2), "keypoints"),
        )

    @property
    def center(self) -> np.ndarray:
        return self.points[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeypointSet2D):
            return NotImplemented
        return np.array_equal(self.points, other.points)


@dataclass(frozen=True, eq=False)
class OrientedBoxVertices:
    """The nine box keypoints in the camera frame."""

    points: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "points",
            _frozen(self.points, (NUM_KEYPOINTS, 3), "vertices"),
        )

    def scaled(self, factor: float) -> "OrientedBoxVertices":
        return OrientedBoxVertices(self.points * factor)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OrientedBoxVertices):
            return NotImplemented
        return np.array_equal(self.points, other.points)


class Rect(NamedTuple):
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    def expanded(self, margin: float) -> "Rect":
        """Grow each side by ``margin`` times the matching extent."""
        dx = self.width * margin
        dy = self.height * margin
        return Rect(self.x0 - dx, self.y0 - dy, self.x1 + dx, self.y1 + dy)


class PoseFit(NamedTuple):
    """Result of fitting a box to nine vertices."""

    pose: BoxPose
    residual: float


def project(K: CameraIntrinsics, p) -> np.ndarray:
    """
    Project a camera-frame point to pixels.

    Raises:
        DomainException: If the point is not in front of the camera
    """
    x, y, z = np.asarray(p, dtype=float)
    if not z > 0:
        raise DomainException(f"Point depth {z} is not positive")
    return np.array([K.fx * x / z + K.cx, K.fy * y / z + K.cy])


def project_points(K: CameraIntrinsics, points) -> np.ndarray:
    """
    Project an (n, 3) array of camera-frame points.

    Raises:
        DomainException: Carrying the index of the first point behind the
            camera
    """
    points = np.asarray(points, dtype=float)
    behind = np.flatnonzero(~(points[:, 2] > 0))
    if behind.size:
        index = int(behind[0])
        raise DomainException(
            f"Point {index} lies behind the camera", index=index
        )
    z = points[:, 2]
    return np.column_stack(
        (
            K.fx * points[:, 0] / z + K.cx,
            K.fy * points[:, 1] / z + K.cy,
        )
    )


def box_vertices(pose: BoxPose) -> OrientedBoxVertices:
    """Compute the nine camera-frame keypoints of a box."""
    local = KEYPOINT_SIGNS * (pose.size / 2.0)
    return OrientedBoxVertices(pose.translation + local @ pose.rotation.T)


def project_box(K: CameraIntrinsics, pose: BoxPose) -> KeypointSet2D:
    """Project the nine box keypoints, keeping the index convention."""
    return KeypointSet2D(project_points(K, box_vertices(pose).points))


def edge_vectors(verts: OrientedBoxVertices) -> np.ndarray:
    """Return the (3, 4, 3) edge vectors grouped by object axis."""
    points = verts.points
    return np.array(
        [
            [points[upper] - points[lower] for lower, upper in axis_edges]
            for axis_edges in AXIS_EDGES
        ]
    )


def edge_lengths(verts: OrientedBoxVertices) -> np.ndarray:
    """Mean edge length along each object axis."""
    return np.linalg.norm(edge_vectors(verts), axis=2).mean(axis=1)


def fit_pose_from_vertices(verts: OrientedBoxVertices) -> PoseFit:
    """
    Fit a box pose to nine vertices.

    The direction of each axis is the mean of its four parallel edges and
    its size the mean edge length. The rotation is the closest proper
    rotation to the normalized direction matrix.

    Raises:
        EstimationException: If any mean edge length is below 1e-12
    """
    edges = edge_vectors(verts)
    sizes = np.linalg.norm(edges, axis=2).mean(axis=1)
    if np.any(sizes <= DEGENERATE_EDGE):
        raise EstimationException(
            "Vertex set is collapsed", details={"sizes": sizes.tolist()}
        )

    directions = edges.mean(axis=1)
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms <= DEGENERATE_EDGE):
        raise EstimationException(
            "Edge directions cancel out", details={"sizes": sizes.tolist()}
        )
    D = (directions / norms[:, None]).T

    U, _, Vt = np.linalg.svd(D)
    correction = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    rotation = U @ correction @ Vt

    pose = BoxPose(rotation, verts.points[0], sizes)
    diff = verts.points - box_vertices(pose).points
    residual = float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))
    return PoseFit(pose, residual)


def rotation_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic distance between two rotations, in radians."""
    Rd = np.asarray(Ra).T @ np.asarray(Rb)
    cos_angle = (np.trace(Rd) - 1.0) / 2.0
    axis = np.array(
        [Rd[2, 1] - Rd[1, 2], Rd[0, 2] - Rd[2, 0], Rd[1, 0] - Rd[0, 1]]
    )
    sin_angle = np.linalg.norm(axis) / 2.0
    return float(np.arctan2(sin_angle, cos_angle))


def box_volume(pose: BoxPose) -> float:
    return float(np.prod(pose.size))


def _half_spaces(pose: BoxPose, origin: np.ndarray) -> np.ndarray:
    """Rows ``(n, c)`` with the box equal to ``{x : n.x <= c}``."""
    center = pose.translation - origin
    planes = []
    for axis in range(3):
        normal = pose.rotation[:, axis]
        half = pose.size[axis] / 2.0
        planes.append(np.append(normal, normal @ center + half))
        planes.append(np.append(-normal, -normal @ center + half))
    return np.array(planes)


def _box_faces(pose: BoxPose, origin: np.ndarray) -> list:
    points = box_vertices(pose).points - origin
    return [points[list(face)] for face in BOX_FACES]


def _clip_polygon(
    polygon: np.ndarray, distances: np.ndarray, eps: float
) -> np.ndarray:
    """Sutherland-Hodgman step keeping the side with distance <= eps."""
    output = []
    count = len(polygon)
    for i in range(count):
        p, q = polygon[i], polygon[(i + 1) % count]
        dp, dq = distances[i], distances[(i + 1) % count]
        p_inside = dp <= eps
        q_inside = dq <= eps
        if p_inside:
            output.append(p)
        if p_inside != q_inside:
            t = dp / (dp - dq)
            output.append(p + t * (q - p))
    return np.array(output).reshape(-1, 3)


def _cap_polygon(
    points: np.ndarray, normal: np.ndarray, eps: float
) -> np.ndarray:
    """Order coplanar points counter-clockwise around ``normal``."""
    if len(points) < 3:
        return np.empty((0, 3))
    helper = np.eye(3)[int(np.argmin(np.abs(normal)))]
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    centroid = points.mean(axis=0)
    rel = points - centroid
    angles = np.arctan2(rel @ v, rel @ u)
    ordered = points[np.argsort(angles, kind="stable")]

    unique = [ordered[0]]
    for point in ordered[1:]:
        if np.linalg.norm(point - unique[-1]) > eps:
            unique.append(point)
    if len(unique) > 1 and np.linalg.norm(unique[0] - unique[-1]) <= eps:
        unique.pop()
    return np.array(unique) if len(unique) >= 3 else np.empty((0, 3))


def _polygon_area(polygon: np.ndarray) -> float:
    if len(polygon) < 3:
        return 0.0
    cross = np.zeros(3)
    for i in range(1, len(polygon) - 1):
        cross += np.cross(
            polygon[i] - polygon[0], polygon[i + 1] - polygon[0]
        )
    return float(np.linalg.norm(cross) / 2.0)


def _cut_polytope(faces: list, plane: np.ndarray, eps: float) -> list:
    """Intersect a closed convex polytope with ``{x : n.x <= c}``."""
    normal, offset = plane[:3], plane[3]
    distances = [face @ normal - offset for face in faces]
    all_d = np.concatenate(distances)

    if np.all(all_d <= eps):
        return faces
    if np.all(all_d >= -eps):
        return []

    clipped = []
    on_plane = []
    for face, d in zip(faces, distances):
        polygon = _clip_polygon(face, d, eps)
        if len(polygon) >= 3 and _polygon_area(polygon) > eps * eps:
            clipped.append(polygon)
        if len(polygon):
            pd = polygon @ normal - offset
            on_plane.extend(polygon[np.abs(pd) <= eps])

    has_face_on_plane = any(
        np.all(np.abs(face @ normal - offset) <= eps) for face in clipped
    )
    if not has_face_on_plane and on_plane:
        cap = _cap_polygon(np.array(on_plane), normal, eps)
        if len(cap) >= 3 and _polygon_area(cap) > eps * eps:
            clipped.append(cap)
    return clipped


def _polytope_volume(faces: list) -> float:
    """Volume of a closed polytope with outward faces (divergence form)."""
    volume = 0.0
    for face in faces:
        for i in range(1, len(face) - 1):
            volume += face[0] @ np.cross(face[i], face[i + 1])
    return volume / 6.0


def intersection_volume(a: BoxPose, b: BoxPose) -> float:
    """Exact volume shared by two oriented boxes."""
    origin = a.translation
    scale = float(max(a.size.max(), b.size.max()))
    eps = 1e-12 * scale

    faces = _box_faces(a, origin)
    for plane in _half_spaces(b, origin):
        faces = _cut_polytope(faces, plane, eps)
        if not faces:
            return 0.0
    volume = _polytope_volume(faces)
    return float(min(max(volume, 0.0), box_volume(a), box_volume(b)))


def iou3d(a: BoxPose, b: BoxPose) -> float:
    """Intersection over union of two oriented boxes."""
    intersection = intersection_volume(a, b)
    union = box_volume(a) + box_volume(b) - intersection
    if union <= 0:
        return 0.0
    return float(min(max(intersection / union, 0.0), 1.0))


def keypoint_extent(kp: KeypointSet2D) -> Rect:
    """Axis-aligned extent of a keypoint set."""
    low = kp.points.min(axis=0)
    high = kp.points.max(axis=0)
    return Rect(float(low[0]), float(low[1]), float(high[0]), float(high[1]))


def iou2d_rect(a: Rect, b: Rect) -> float:
    """Intersection over union of two axis-aligned rectangles."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    intersection = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - intersection
    if union <= 0:
        return 0.0
    return float(intersection / union)
