"""Per-step reward: distance-weighted face coverage, visit-decayed search bonus,
and the proximity penalty from the local occupancy grid."""

from dataclasses import dataclass, field

import numpy as np

from inspectsim import kernels
from inspectsim.geometry import InvalidArgumentError
from inspectsim.mapping import LOCAL_N, OCCUPIED, RESOLUTION

# Half score at 0.25 m error from the desired inspection distance.
DEFAULT_BETA = float(np.log(2.0) / 0.25**2)


@dataclass(frozen=True)
class RewardParams:
    alpha: float | None = None  # None -> 1/N_f, so full ideal coverage sums to 1
    beta: float = DEFAULT_BETA
    gamma: float = 0.1
    delta: float = 0.01
    d_ref: float = 1.0
    d_coll: float = 0.3
    focus_fraction: float = 0.5
    incremental: bool = True  # False pays the full face score on every improvement

    def __post_init__(self):
        if self.beta <= 0 or self.gamma <= 0 or self.delta <= 0:
            raise InvalidArgumentError("beta, gamma, delta must be positive")
        if self.alpha is not None and self.alpha <= 0:
            raise InvalidArgumentError("alpha must be positive")

    def alpha_for(self, n_faces: int) -> float:
        return self.alpha if self.alpha is not None else 1.0 / n_faces


class FaceLedger:
    """Per-face best observation distance and stored score for one semantic object.

    The best distance only ever moves weakly closer to d_ref, so the cumulative
    coverage functional is non-decreasing.
    """

    def __init__(self, n_faces: int):
        self.n_faces = n_faces
        self.d_f = np.full(n_faces, np.inf)  # inf = never scored
        self.s_f = np.zeros(n_faces)

    @property
    def coverage(self) -> float:
        """Cumulative coverage functional: sum of stored face scores."""
        return float(self.s_f.sum())

    def scored_faces(self) -> np.ndarray:
        return np.isfinite(self.d_f)

    def faces_within(self, d_ref: float, band: float) -> np.ndarray:
        """Faces whose best observation distance lies inside [d_ref-band, d_ref+band]."""
        return np.isfinite(self.d_f) & (np.abs(self.d_f - d_ref) <= band)


def focus_mask(width: int, height: int) -> np.ndarray:
    """Centered rectangle of half the image dimensions; off-by-one goes low."""
    fw, fh = width // 2, height // 2
    x0 = (width - fw) // 2
    y0 = (height - fh) // 2
    m = np.zeros((height, width), dtype=np.uint8)
    m[y0 : y0 + fh, x0 : x0 + fw] = 1
    return m


def update_face_rewards(
    ledger: FaceLedger,
    face_obj: np.ndarray,
    face_id: np.ndarray,
    depth: np.ndarray,
    focus: np.ndarray,
    semantic_object_id: int,
    params: RewardParams,
) -> float:
    """Score faces visible in the focus area and return this step's coverage reward.

    For each visible face the mean depth d over its focus pixels is compared with
    the stored best d_f; on improvement (|d - d_ref| < |d_f - d_ref|) the face's
    score becomes alpha*exp(-beta*(d - d_ref)^2). In incremental mode the reward
    is the score delta, otherwise the full new score.
    """
    if face_obj.shape != depth.shape or face_id.shape != depth.shape or focus.shape != depth.shape:
        raise InvalidArgumentError("image shapes must match")
    alpha = params.alpha_for(ledger.n_faces)
    sums = np.empty(ledger.n_faces)
    counts = np.empty(ledger.n_faces, dtype=np.int64)
    kernels.face_depth_stats(
        face_obj, face_id, depth, focus, semantic_object_id, ledger.n_faces, sums, counts
    )
    seen = counts > 0
    if not np.any(seen):
        return 0.0
    d = sums[seen] / counts[seen]
    idx = np.nonzero(seen)[0]
    err = np.abs(d - params.d_ref)
    old_err = np.abs(ledger.d_f[idx] - params.d_ref)  # inf when never scored
    improved = err < old_err
    if not np.any(improved):
        return 0.0
    idx = idx[improved]
    d = d[improved]
    new_scores = alpha * np.exp(-params.beta * (d - params.d_ref) ** 2)
    if params.incremental:
        f_step = float(np.sum(new_scores - ledger.s_f[idx]))
    else:
        f_step = float(np.sum(new_scores))
    ledger.s_f[idx] = new_scores
    ledger.d_f[idx] = d
    return f_step


def semantic_search_reward(n_visits: int, params: RewardParams) -> float:
    """Exploration bonus decaying with the number of visits inside the local map."""
    if n_visits < 0:
        raise InvalidArgumentError("visit count must be >= 0")
    return params.gamma * float(np.exp(-params.delta * n_visits))


# Cell offsets strictly within d_coll of the window center, precomputed per
# (n, d_coll/res) in exact integer arithmetic: |offset|*res < d_coll iff
# sum(offset^2) < (d_coll/res)^2.
_proximity_cache: dict = {}


def _proximity_mask(n: int, d_coll: float, res: float) -> np.ndarray:
    key = (n, d_coll, res)
    m = _proximity_cache.get(key)
    if m is None:
        c = (n - 1) // 2
        ax = np.arange(n) - c
        sq = ax[:, None, None] ** 2 + ax[None, :, None] ** 2 + ax[None, None, :] ** 2
        limit_sq = (d_coll / res) ** 2
        # strict inequality; nudge handles exact-boundary float representations
        m = sq < limit_sq - 1e-9
        _proximity_cache[key] = m
    return m


def collision_penalty(local_occupancy: np.ndarray, params: RewardParams, resolution: float = RESOLUTION) -> float:
    """-1 if any occupied cell center lies strictly within d_coll of the agent."""
    n = local_occupancy.shape[0]
    mask = _proximity_mask(n, params.d_coll, resolution)
    if np.any(local_occupancy[mask] == OCCUPIED):
        return -1.0
    return 0.0


@dataclass(frozen=True)
class RewardBreakdown:
    f: float
    v: float
    p: float

    @property
    def total(self) -> float:
        return self.f + self.v + self.p
