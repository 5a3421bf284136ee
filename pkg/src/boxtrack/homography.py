"""
Robust plane-motion estimation from sparse correspondences.

Homographies are stored normalized: unit Frobenius norm with the
bottom-right entry non-negative. Estimation uses Hartley-normalized DLT
and RANSAC over minimal four-point samples.

RANSAC sampling is deterministic given the seed. Hypotheses are drawn in a
single batch from ``numpy.random.default_rng(seed)``: for draw ``k`` in
0..3 one ``integers(0, n - k, size=max_iterations)`` call picks a rank
among the indices not chosen yet, and the rank is mapped to an index by
stepping over the earlier picks of the same sample in ascending order.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Tuple, Union

import numpy as np

from .exceptions import (
    DegenerateInputException,
    DomainException,
    TrackingLostException,
)
from .logging_config import get_logger
from .schemas.config import RansacConfig

logger = get_logger(__name__)

MIN_DETERMINANT = 1e-12
AT_INFINITY = 1e-12
DEGENERATE_SPECTRUM = 1e-9
MIN_SAMPLE_AREA = 1e-6
SAMPLE_SIZE = 4
REFINE_PASSES = 5


@dataclass(frozen=True, eq=False)
class Homography:
    """Projective 3x3 map between two views of a plane.

    The matrix is normalized on construction, so non-zero multiples of a
    matrix give the same homography up to floating-point rounding.
    Equality compares the stored matrices exactly.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise DomainException("homography must be a finite 3x3 matrix")
        norm = np.linalg.norm(m)
        if norm == 0.0:
            raise DomainException("homography must be non-zero")
        m = m / norm
        if m[2, 2] < 0:
            m = -m
        if abs(np.linalg.det(m)) <= MIN_DETERMINANT:
            raise DomainException("homography is not invertible")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Homography):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)


class Correspondence(NamedTuple):
    """A point seen in frame ``t - 1`` (prev) and frame ``t`` (curr)."""

    prev: np.ndarray
    curr: np.ndarray


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Batch of correspondences stored as two (n, 2) arrays."""

    prev: np.ndarray
    curr: np.ndarray

    def __post_init__(self) -> None:
        prev = np.array(self.prev, dtype=float).reshape(-1, 2)
        curr = np.array(self.curr, dtype=float).reshape(-1, 2)
        if prev.shape != curr.shape:
            raise DomainException(
                "prev and curr must hold the same number of points"
            )
        if not (np.all(np.isfinite(prev)) and np.all(np.isfinite(curr))):
            raise DomainException("correspondences must be finite")
        prev.setflags(write=False)
        curr.setflags(write=False)
        object.__setattr__(self, "prev", prev)
        object.__setattr__(self, "curr", curr)

    @classmethod
    def empty(cls) -> "Correspondences":
        return cls(np.empty((0, 2)), np.empty((0, 2)))

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[Correspondence]
    ) -> "Correspondences":
        items = list(pairs)
        if not items:
            return cls.empty()
        return cls(
            np.array([p.prev for p in items]),
            np.array([p.curr for p in items]),
        )

    def subset(self, mask: np.ndarray) -> "Correspondences":
        return Correspondences(self.prev[mask], self.curr[mask])

    def __len__(self) -> int:
        return len(self.prev)

    def __iter__(self) -> Iterator[Correspondence]:
        for prev, curr in zip(self.prev, self.curr):
            yield Correspondence(prev, curr)


CorrespondenceInput = Union[Correspondences, Iterable[Correspondence]]


def as_correspondences(corrs: CorrespondenceInput) -> Correspondences:
    if isinstance(corrs, Correspondences):
        return corrs
    return Correspondences.from_pairs(corrs)


def apply(H: Homography, p) -> np.ndarray:
    """
    Map a pixel through ``H``.

    Raises:
        DomainException: If the point maps to infinity
    """
    x, y = np.asarray(p, dtype=float)
    q = H.matrix @ np.array([x, y, 1.0])
    if abs(q[2]) <= AT_INFINITY:
        raise DomainException("point maps to infinity")
    return q[:2] / q[2]


def apply_points(H: Homography, points) -> np.ndarray:
    """
    Map an (n, 2) array of pixels through ``H``.

    Raises:
        DomainException: Carrying the index of the first point that maps
            to infinity
    """
    points = np.asarray(points, dtype=float)
    q = _to_homogeneous(points) @ H.matrix.T
    at_infinity = np.flatnonzero(np.abs(q[:, 2]) <= AT_INFINITY)
    if at_infinity.size:
        index = int(at_infinity[0])
        raise DomainException(f"point {index} maps to infinity", index=index)
    return q[:, :2] / q[:, 2:]


def compose(A: Homography, B: Homography) -> Homography:
    """Homography acting as ``B`` followed by ``A``."""
    return Homography(A.matrix @ B.matrix)


def invert(H: Homography) -> Homography:
    return Homography(np.linalg.inv(H.matrix))


def symmetric_transfer_error(
    H: Homography, corrs: CorrespondenceInput
) -> np.ndarray:
    """Per-correspondence symmetric transfer error in pixels."""
    corrs = as_correspondences(corrs)
    return _transfer_errors(
        H.matrix[None], _adjugate(H.matrix[None]), corrs.prev, corrs.curr
    )[0]


def _to_homogeneous(points: np.ndarray) -> np.ndarray:
    return np.column_stack((points, np.ones(len(points))))


def _normalizing_transform(points: np.ndarray) -> np.ndarray:
    """Similarity moving points to zero mean and RMS radius sqrt(2)."""
    centroid = points.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((points - centroid) ** 2, axis=1)))
    if rms <= 0.0:
        raise DegenerateInputException(
            "All points coincide", details={"points": len(points)}
        )
    s = math.sqrt(2.0) / rms
    return np.array(
        [
            [s, 0.0, -s * centroid[0]],
            [0.0, s, -s * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _transform(T: np.ndarray, points: np.ndarray) -> np.ndarray:
    q = _to_homogeneous(points) @ T.T
    return q[:, :2] / q[:, 2:]


def _dlt_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    n = len(p)
    x, y = p[:, 0], p[:, 1]
    u, v = q[:, 0], q[:, 1]
    zeros = np.zeros(n)
    ones = np.ones(n)
    A = np.zeros((2 * n, 9))
    A[0::2] = np.column_stack(
        (x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u)
    )
    A[1::2] = np.column_stack(
        (zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v)
    )
    return A


def estimate_dlt(corrs: CorrespondenceInput) -> Homography:
    """
    Estimate a homography by normalized DLT.

    The solution is the right singular vector of the smallest singular
    value of the stacked system, which is the smallest eigenvector of its
    normal matrix.

    Raises:
        DegenerateInputException: If fewer than four correspondences are
            given or the two smallest singular values coincide
    """
    corrs = as_correspondences(corrs)
    if len(corrs) < SAMPLE_SIZE:
        raise DegenerateInputException(
            "At least four correspondences are required",
            details={"correspondences": len(corrs)},
        )

    T_prev = _normalizing_transform(corrs.prev)
    T_curr = _normalizing_transform(corrs.curr)
    A = _dlt_rows(
        _transform(T_prev, corrs.prev), _transform(T_curr, corrs.curr)
    )
    if len(A) < 9:
        A = np.vstack((A, np.zeros((9 - len(A), 9))))

    _, singular_values, Vt = np.linalg.svd(A)
    spread = singular_values[-2] - singular_values[-1]
    if spread <= DEGENERATE_SPECTRUM * singular_values[0]:
        raise DegenerateInputException(
            "Correspondences do not determine a homography",
            details={"singular_values": singular_values[-2:].tolist()},
        )

    H_normalized = Vt[-1].reshape(3, 3)
    matrix = np.linalg.inv(T_curr) @ H_normalized @ T_prev
    try:
        return Homography(matrix)
    except DomainException as e:
        raise DegenerateInputException(
            "Estimated homography is singular"
        ) from e


def draw_samples(
    rng: np.random.Generator, n: int, iterations: int
) -> np.ndarray:
    """Draw ``iterations`` samples of four distinct indices below ``n``."""
    samples = np.empty((iterations, SAMPLE_SIZE), dtype=np.int64)
    for k in range(SAMPLE_SIZE):
        rank = rng.integers(0, n - k, size=iterations)
        for earlier in np.sort(samples[:, :k], axis=1).T:
            rank = rank + (rank >= earlier)
        samples[:, k] = rank
    return samples


def _triangle_areas(points: np.ndarray) -> np.ndarray:
    """Areas of the four triangles of each (m, 4, 2) quadruple."""
    areas = []
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a = points[:, j] - points[:, i]
        b = points[:, k] - points[:, i]
        areas.append(np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]) / 2.0)
    return np.stack(areas, axis=1)


def _solve_minimal(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve (m, 4, 2) quadruples for (m, 3, 3) homographies, h33 = 1."""
    m = len(p)
    x, y = p[..., 0], p[..., 1]
    u, v = q[..., 0], q[..., 1]
    zeros = np.zeros_like(x)
    ones = np.ones_like(x)
    A = np.zeros((m, 8, 8))
    A[:, 0::2] = np.stack(
        (x, y, ones, zeros, zeros, zeros, -u * x, -u * y), axis=-1
    )
    A[:, 1::2] = np.stack(
        (zeros, zeros, zeros, x, y, ones, -v * x, -v * y), axis=-1
    )
    b = np.empty((m, 8))
    b[:, 0::2] = u
    b[:, 1::2] = v
    try:
        h = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        # A singular sample poisons the batched solve; fall back per sample.
        return np.array(
            [_minimal_svd(p[i], q[i]) for i in range(m)]
        ).reshape(m, 3, 3)
    return np.concatenate((h, np.ones((m, 1))), axis=1).reshape(m, 3, 3)


def _minimal_svd(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    A = np.vstack((_dlt_rows(p, q), np.zeros((1, 9))))
    _, _, Vt = np.linalg.svd(A)
    return Vt[-1].reshape(3, 3)


def _adjugate(H: np.ndarray) -> np.ndarray:
    """Batched adjugate; equals the inverse up to scale."""
    r0, r1, r2 = H[:, 0], H[:, 1], H[:, 2]
    return np.stack(
        (np.cross(r1, r2), np.cross(r2, r0), np.cross(r0, r1)), axis=-1
    )


def _map(H: np.ndarray, points: np.ndarray) -> np.ndarray:
    q = np.einsum("hij,nj->hni", H, _to_homogeneous(points))
    with np.errstate(divide="ignore", invalid="ignore"):
        mapped = q[..., :2] / q[..., 2:]
    mapped[np.abs(q[..., 2]) <= AT_INFINITY] = np.inf
    return mapped


def _transfer_errors(
    H: np.ndarray, H_inv: np.ndarray, prev: np.ndarray, curr: np.ndarray
) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        forward = np.sum((_map(H, prev) - curr) ** 2, axis=-1)
        backward = np.sum((_map(H_inv, curr) - prev) ** 2, axis=-1)
        errors = np.sqrt(forward + backward)
    errors[~np.isfinite(errors)] = np.inf
    return errors


def required_iterations(inlier_ratio: float, confidence: float) -> float:
    """Hypotheses needed to draw one all-inlier sample with confidence."""
    if inlier_ratio >= 1.0:
        return 1.0
    p_good = inlier_ratio**SAMPLE_SIZE
    if p_good <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 - confidence) / math.log1p(-p_good))


def _adaptive_limit(counts: np.ndarray, n: int, confidence: float) -> int:
    best = 0
    needed = math.inf
    for k, count in enumerate(counts):
        if count > best:
            best = int(count)
            needed = required_iterations(best / n, confidence)
        if k + 1 >= needed:
            return k + 1
    return len(counts)


def _score_hypotheses(
    corrs: Correspondences, cfg: RansacConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return hypotheses, their inlier masks and inlier counts."""
    n = len(corrs)
    rng = np.random.default_rng(cfg.seed)
    samples = draw_samples(rng, n, cfg.max_iterations)

    T_prev = _normalizing_transform(corrs.prev)
    T_curr = _normalizing_transform(corrs.curr)
    p = _transform(T_prev, corrs.prev)[samples]
    q = _transform(T_curr, corrs.curr)[samples]

    valid = np.all(_triangle_areas(p) > MIN_SAMPLE_AREA, axis=1) & np.all(
        _triangle_areas(q) > MIN_SAMPLE_AREA, axis=1
    )
    hypotheses = np.tile(np.eye(3), (len(samples), 1, 1))
    if np.any(valid):
        H_normalized = _solve_minimal(p[valid], q[valid])
        hypotheses[valid] = np.linalg.inv(T_curr) @ H_normalized @ T_prev

    finite = np.all(np.isfinite(hypotheses), axis=(1, 2))
    hypotheses[~finite] = np.eye(3)
    scale = np.linalg.norm(hypotheses, axis=(1, 2))
    hypotheses = hypotheses / scale[:, None, None]
    adjugates = _adjugate(hypotheses)
    det = np.einsum("hi,hi->h", hypotheses[:, 0], adjugates[:, :, 0])
    valid &= finite & (np.abs(det) > MIN_DETERMINANT)

    errors = _transfer_errors(hypotheses, adjugates, corrs.prev, corrs.curr)
    masks = errors < cfg.inlier_threshold
    masks[~valid] = False
    counts = np.where(valid, masks.sum(axis=1), -1)
    return hypotheses, masks, counts


def _refine(
    corrs: Correspondences,
    H: Homography,
    mask: np.ndarray,
    cfg: RansacConfig,
) -> Tuple[Homography, np.ndarray]:
    """Re-score every correspondence against the refit and refit again."""
    for _ in range(REFINE_PASSES):
        refined = symmetric_transfer_error(H, corrs) < cfg.inlier_threshold
        if refined.sum() < cfg.min_inliers or np.array_equal(refined, mask):
            break
        try:
            H = estimate_dlt(corrs.subset(refined))
        except DegenerateInputException:
            break
        mask = refined
    return H, mask


def estimate_ransac(
    corrs: CorrespondenceInput, cfg: RansacConfig
) -> Tuple[Homography, np.ndarray]:
    """
    Robustly estimate a homography.

    Every hypothesis is scored by symmetric transfer error; the first
    hypothesis with the most inliers wins and the result is refit by DLT
    on its inlier set. The refit re-scores all correspondences and is
    repeated until the inlier set settles, at most ``REFINE_PASSES``
    times. With ``cfg.adaptive`` the same hypothesis sequence
    is cut short once the confidence target is reached.

    Returns:
        Tuple of the homography and the boolean inlier mask in input order

    Raises:
        TrackingLostException: If fewer than ``cfg.min_inliers``
            correspondences support the best hypothesis
    """
    corrs = as_correspondences(corrs)
    n = len(corrs)
    if n < cfg.min_inliers:
        raise TrackingLostException(
            f"{n} correspondences, {cfg.min_inliers} required", inliers=0
        )

    try:
        hypotheses, masks, counts = _score_hypotheses(corrs, cfg)
    except DegenerateInputException as e:
        raise TrackingLostException(
            "Correspondences are degenerate", inliers=0
        ) from e

    limit = len(counts)
    if cfg.adaptive:
        limit = _adaptive_limit(counts, n, cfg.confidence)
    best = int(np.argmax(counts[:limit]))
    best_count = int(counts[best])
    if best_count < cfg.min_inliers:
        raise TrackingLostException(
            f"Best hypothesis has {max(best_count, 0)} inliers",
            inliers=max(best_count, 0),
        )

    mask = masks[best]
    try:
        H = estimate_dlt(corrs.subset(mask))
    except DegenerateInputException:
        H = Homography(hypotheses[best])
    else:
        H, mask = _refine(corrs, H, mask, cfg)

    logger.debug(
        "RANSAC accepted hypothesis",
        extra={
            "inliers": best_count,
            "correspondences": n,
            "hypotheses": limit,
        },
    )
    return H, mask.copy()
