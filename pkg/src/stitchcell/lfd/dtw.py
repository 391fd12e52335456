"""Dynamic time warping of pose streams onto a reference timeline.

The local distance is a weighted squared Euclidean over h: translation in
meters enters directly, rotation components (degrees) are scaled by
ROTATION_WEIGHT_M_PER_DEG so one degree costs the same as ten
millimetres.  Paths use steps {(1,0), (0,1), (1,1)} and are anchored at
both ends.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptyStream

# meter-equivalent of one degree in the warping metric
ROTATION_WEIGHT_M_PER_DEG = 0.01

_W = np.array([1.0, 1.0, 1.0] + [ROTATION_WEIGHT_M_PER_DEG] * 3) ** 2


def h_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Weighted squared distance between two h vectors."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sum(_W * d * d))


def dtw_cost_and_path(
    a: np.ndarray, b: np.ndarray
) -> tuple[float, list[tuple[int, int]]]:
    """Minimum warping cost and one optimal path between h streams.

    a is (N, 6), b is (M, 6).  The path starts at (0, 0), ends at
    (N-1, M-1), and is returned in order.  Ties are broken preferring the
    diagonal step, then advancing ``a``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n, m = len(a), len(b)
    if n < 2 or m < 2:
        raise EmptyStream(f"streams must have length >= 2, got {n} and {m}")

    # pairwise local distances, vectorized
    diff = a[:, None, :] - b[None, :, :]
    local = np.einsum("ijk,k->ij", diff * diff, _W)

    acc = np.full((n, m), np.inf)
    acc[0, 0] = local[0, 0]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + local[i, 0]
    acc[0, 1:] = np.cumsum(local[0, 1:]) + local[0, 0]
    for i in range(1, n):
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, m):
            row[j] = local[i, j] + min(prev[j - 1], prev[j], row[j - 1])

    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            candidates = (
                (acc[i - 1, j - 1], i - 1, j - 1),
                (acc[i - 1, j], i - 1, j),
                (acc[i, j - 1], i, j - 1),
            )
            _, i, j = min(candidates, key=lambda c: c[0])
        path.append((i, j))
    path.reverse()
    return float(acc[n - 1, m - 1]), path


def warp_to_reference(
    ref_h: np.ndarray, other_h: np.ndarray
) -> np.ndarray:
    """Re-index ``other_h`` onto the reference timeline.

    Every reference index receives the mean of the other-stream samples
    its path maps to, so the result has exactly len(ref_h) rows.
    """
    _, path = dtw_cost_and_path(ref_h, other_h)
    n = len(ref_h)
    out = np.zeros((n, other_h.shape[1]))
    counts = np.zeros(n)
    for i, j in path:
        out[i] += other_h[j]
        counts[i] += 1
    return out / counts[:, None]


def rebase_angles(reference: np.ndarray, stream: np.ndarray) -> np.ndarray:
    """Shift angle columns by whole turns to match the reference branch.

    Unwrapped Euler streams of the same motion can sit 360 degrees apart
    when the first sample lands on the other side of the +-180 cut; the
    offset is removed per column before warping and statistics.
    """
    out = np.array(stream, dtype=float)
    for c in range(3, 6):
        turns = round((float(reference[0, c]) - float(stream[0, c])) / 360.0)
        if turns:
            out[:, c] += 360.0 * turns
    return out


def dtw_align(reference: np.ndarray, others: list[np.ndarray]) -> list[np.ndarray]:
    """Align h streams to the reference timeline.

    Returns [reference] + one warped stream per input, all of the
    reference's length.  Angle columns are rebased to the reference's
    360-degree branch first.  Raises EmptyStream when fewer than two
    streams are supplied or any stream is shorter than 2 samples.
    """
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if len(others) < 1:
        raise EmptyStream("need a reference and at least one other stream")
    if len(reference) < 2:
        raise EmptyStream("reference stream shorter than 2 samples")
    warped = [reference.copy()]
    for other in others:
        other = np.atleast_2d(np.asarray(other, dtype=float))
        warped.append(warp_to_reference(reference, rebase_angles(reference, other)))
    return warped
