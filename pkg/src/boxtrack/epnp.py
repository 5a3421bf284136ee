"""
Lift nine box keypoints to camera-frame vertices up to a global scale.

The solver is EPnP with box-structured control points: the centre and
the three half-axis endpoints. Every keypoint is an affine combination of
the four control points with coefficients fixed by the box structure, so
the projections give a homogeneous 18x12 linear system whose null space
is the scale-free solution.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    AmbiguousLiftException,
    DomainException,
    EstimationException,
)
from .geometry import (
    DEGENERATE_EDGE,
    KEYPOINT_SIGNS,
    NUM_KEYPOINTS,
    BoxPose,
    CameraIntrinsics,
    KeypointSet2D,
    OrientedBoxVertices,
    edge_lengths,
    fit_pose_from_vertices,
    project_points,
)

MIN_SPECTRAL_GAP = 10.0
# Singular values below this fraction of the largest count as zero.
RANK_TOL = 1e-9


def barycentric_table() -> np.ndarray:
    """
    Generalized barycentric coefficients of the nine keypoints.

    Returns:
        9x4 array; row ``i`` expresses keypoint ``i`` in terms of the
        control points (centre, centre + half x, centre + half y,
        centre + half z)
    """
    signs = KEYPOINT_SIGNS
    return np.column_stack((1.0 - signs.sum(axis=1), signs))


_ALPHAS = barycentric_table()
_ALPHAS.setflags(write=False)


@dataclass(frozen=True, eq=False)
class LiftResult:
    """Scale-normalized lift of nine keypoints.

    Attributes:
        vertices: Camera-frame vertices with centre depth 1
        reprojection_rms: RMS pixel distance to the input keypoints
        spectral_gap: Second-smallest over smallest eigenvalue of M^T M
    """

    vertices: OrientedBoxVertices
    reprojection_rms: float
    spectral_gap: float

    def pose(self, canonical_size) -> BoxPose:
        """Box pose after rescaling to ``canonical_size``."""
        rescaled = rescale_to_canonical(self.vertices, canonical_size)
        return fit_pose_from_vertices(rescaled).pose


def build_design_matrix(
    K: CameraIntrinsics, kp: KeypointSet2D
) -> np.ndarray:
    """
    Build the 18x12 EPnP system for the nine keypoints.

    Column ``3j + k`` holds coordinate ``k`` of control point ``j``. The
    true stacked control points lie in the null space.
    """
    u = kp.points[:, 0]
    v = kp.points[:, 1]
    M = np.zeros((2 * NUM_KEYPOINTS, 12))
    for j in range(4):
        alpha = _ALPHAS[:, j]
        M[0::2, 3 * j] = alpha * K.fx
        M[0::2, 3 * j + 2] = alpha * (K.cx - u)
        M[1::2, 3 * j + 1] = alpha * K.fy
        M[1::2, 3 * j + 2] = alpha * (K.cy - v)
    return M


def _spectral_gap(singular_values: np.ndarray) -> float:
    if singular_values[-2] <= RANK_TOL * singular_values[0]:
        return 1.0
    smallest = singular_values[-1] ** 2
    second = singular_values[-2] ** 2
    if smallest <= 0.0:
        return float("inf")
    return float(max(second / smallest, 1.0))


def lift(K: CameraIntrinsics, kp: KeypointSet2D) -> LiftResult:
    """
    Lift keypoints to camera-frame vertices with centre depth 1.

    Raises:
        AmbiguousLiftException: If the null space is not one-dimensional
        DomainException: If a reconstructed vertex lies behind the camera
    """
    M = build_design_matrix(K, kp)
    # Right singular vectors of M are the eigenvectors of M^T M.
    _, singular_values, Vt = np.linalg.svd(M)
    gap = _spectral_gap(singular_values)
    if gap < MIN_SPECTRAL_GAP:
        raise AmbiguousLiftException(gap)

    controls = Vt[-1].reshape(4, 3)
    points = _ALPHAS @ controls
    if points[:, 2].mean() < 0:
        points = -points
    points = points / points[0, 2]

    if np.any(points[:, 2] <= 0):
        index = int(np.flatnonzero(points[:, 2] <= 0)[0])
        raise DomainException(
            f"Lifted vertex {index} lies behind the camera", index=index
        )

    vertices = OrientedBoxVertices(points)
    reprojected = project_points(K, points)
    rms = float(
        np.sqrt(np.mean(np.sum((reprojected - kp.points) ** 2, axis=1)))
    )
    return LiftResult(vertices, rms, gap)


def _geometric_mean(values: np.ndarray) -> float:
    return float(np.exp(np.mean(np.log(values))))


def rescale_to_canonical(
    v: OrientedBoxVertices, canonical_size
) -> OrientedBoxVertices:
    """
    Scale vertices about the camera centre to a canonical size.

    The geometric mean of the recovered edge lengths is matched to that of
    ``canonical_size``; the projections are unchanged.

    Raises:
        EstimationException: If the vertices are collapsed
    """
    canonical = np.asarray(canonical_size, dtype=float)
    if canonical.shape != (3,) or np.any(canonical <= 0):
        raise DomainException("canonical size must be 3 positive values")
    sizes = edge_lengths(v)
    if np.any(sizes <= DEGENERATE_EDGE):
        raise EstimationException(
            "Cannot rescale a collapsed vertex set",
            details={"sizes": sizes.tolist()},
        )
    factor = _geometric_mean(canonical) / _geometric_mean(sizes)
    return v.scaled(factor)
