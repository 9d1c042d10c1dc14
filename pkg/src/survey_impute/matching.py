"""Nearest-neighbour donor search and donor counts.

All matchers return, for every recipient, the position of its nearest donor
in the donor array. Equidistant donors are resolved to the lowest position,
so results agree exactly with an exhaustive ``argmin`` scan over the same
distances (absolute difference for scalars, squared Euclidean distance
accumulated coordinate by coordinate for vectors).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .design import SurveySample
from .errors import NoRespondentsError

_TREE_THRESHOLD = 2_000_000  # donor x recipient pairs above which "auto" uses the tree
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class DonorAssignment:
    """Donor of every nonrespondent plus design-weighted donor counts.

    ``recipients`` and ``donors`` are sample row indices of equal length;
    ``k`` is indexed by sample row and is zero on nonrespondents.
    """

    recipients: np.ndarray
    donors: np.ndarray
    k: np.ndarray
    match_values: np.ndarray | None = None

    @property
    def donor_of(self) -> dict[int, int]:
        return dict(zip(self.recipients.tolist(), self.donors.tolist()))


def _as_scores(a, name):
    a = np.asarray(a, dtype=np.float64).ravel()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


def exhaustive_scalar(donor_scores, recipient_scores) -> np.ndarray:
    """Reference O(n_donor * n_recipient) scan."""
    d = _as_scores(donor_scores, "donor scores")
    r = _as_scores(recipient_scores, "recipient scores")
    if d.size == 0:
        raise NoRespondentsError("no respondents to act as donors")
    out = np.empty(r.size, dtype=np.int64)
    for s in range(0, r.size, _CHUNK):
        out[s:s + _CHUNK] = np.argmin(np.abs(d[None, :] - r[s:s + _CHUNK, None]), axis=1)
    return out


def match_scalar(donor_scores, recipient_scores) -> np.ndarray:
    """Nearest donor by absolute score difference, via sort and binary search."""
    d = _as_scores(donor_scores, "donor scores")
    r = _as_scores(recipient_scores, "recipient scores")
    nd = d.size
    if nd == 0:
        raise NoRespondentsError("no respondents to act as donors")
    if r.size == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(d, kind="stable")
    v = d[order]
    idx = np.arange(nd)
    new_run = np.ones(nd, dtype=bool)
    new_run[1:] = v[1:] != v[:-1]
    run_start = np.maximum.accumulate(np.where(new_run, idx, 0))
    last_in_run = np.ones(nd, dtype=bool)
    last_in_run[:-1] = new_run[1:]
    run_end = np.minimum.accumulate(np.where(last_in_run, idx, nd - 1)[::-1])[::-1]

    pos = np.searchsorted(v, r, side="left")  # v[pos-1] < r <= v[pos]
    lo = np.clip(pos - 1, 0, nd - 1)
    hi = np.clip(pos, 0, nd - 1)
    has_lo = pos > 0
    has_hi = pos < nd
    d_lo = np.where(has_lo, r - v[lo], np.inf)
    d_hi = np.where(has_hi, v[hi] - r, np.inf)
    lo_start = run_start[lo]
    cand_lo = order[lo_start]  # stable sort: lowest original index in the run
    cand_hi = order[hi]
    pick = np.where(d_lo < d_hi, cand_lo,
                    np.where(d_hi < d_lo, cand_hi, np.minimum(cand_lo, cand_hi)))

    # Rounding can make a farther value look exactly as far as the nearest one;
    # those recipients are resolved by exhaustive scan.
    before = lo_start - 1
    after = run_end[hi] + 1
    amb = has_lo & (before >= 0) & (r - v[np.maximum(before, 0)] == d_lo) & (d_lo <= d_hi)
    amb |= has_hi & (after < nd) & (v[np.minimum(after, nd - 1)] - r == d_hi) & (d_hi <= d_lo)
    if amb.any():
        pick[amb] = exhaustive_scalar(d, r[amb])
    return pick


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # fixed summation order so every matcher computes identical distances
    acc = (a[..., 0] - b[..., 0]) ** 2
    for j in range(1, a.shape[-1]):
        acc = acc + (a[..., j] - b[..., j]) ** 2
    return acc


def _as_points(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite 2-d array")
    return a


def exhaustive_vector(donor_x, recipient_x) -> np.ndarray:
    """Reference Euclidean scan."""
    dx = _as_points(donor_x, "donor_x")
    rx = _as_points(recipient_x, "recipient_x")
    if dx.shape[0] == 0:
        raise NoRespondentsError("no respondents to act as donors")
    if dx.shape[1] != rx.shape[1]:
        raise ValueError(f"dimension mismatch: donors {dx.shape[1]}, recipients {rx.shape[1]}")
    out = np.empty(rx.shape[0], dtype=np.int64)
    step = max(1, _CHUNK * 64 // max(dx.shape[0], 1))
    for s in range(0, rx.shape[0], step):
        out[s:s + step] = np.argmin(_sqdist(dx[None, :, :], rx[s:s + step, None, :]), axis=1)
    return out


def _tree_vector(dx, rx) -> np.ndarray:
    tree = cKDTree(dx)
    dist, _ = tree.query(rx, k=1)
    balls = tree.query_ball_point(rx, r=dist * (1.0 + 1e-7), return_sorted=True)
    out = np.empty(rx.shape[0], dtype=np.int64)
    for i, cand in enumerate(balls):
        if len(cand) == 1:
            out[i] = cand[0]
            continue
        cand = np.asarray(cand, dtype=np.int64)
        out[i] = cand[np.argmin(_sqdist(dx[cand], rx[i]))]
    return out


def match_vector(donor_x, recipient_x, method: str = "auto") -> np.ndarray:
    """Euclidean nearest donor; ``method`` is ``"auto"``, ``"exhaustive"`` or ``"tree"``."""
    dx = _as_points(donor_x, "donor_x")
    rx = _as_points(recipient_x, "recipient_x")
    if dx.shape[0] == 0:
        raise NoRespondentsError("no respondents to act as donors")
    if dx.shape[1] != rx.shape[1]:
        raise ValueError(f"dimension mismatch: donors {dx.shape[1]}, recipients {rx.shape[1]}")
    if rx.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if method == "auto":
        method = "tree" if dx.shape[0] * rx.shape[0] > _TREE_THRESHOLD else "exhaustive"
    if method == "tree":
        return _tree_vector(dx, rx)
    if method == "exhaustive":
        return exhaustive_vector(dx, rx)
    raise ValueError(f"unknown matching method {method!r}")


def donor_counts(sample: SurveySample, recipients, donors) -> np.ndarray:
    """k_i = sum over recipients j served by i of pi_i / pi_j, indexed by sample row."""
    recipients = np.asarray(recipients, dtype=np.int64)
    donors = np.asarray(donors, dtype=np.int64)
    served = np.bincount(donors, weights=1.0 / sample.pi[recipients], minlength=sample.n)
    return served * sample.pi


def assign_donors(sample: SurveySample, donor_pool, recipients, donor_positions,
                  match_values=None) -> DonorAssignment:
    """Map matcher output (positions in ``donor_pool``) to a ``DonorAssignment``."""
    donors = np.asarray(donor_pool, dtype=np.int64)[donor_positions]
    recipients = np.asarray(recipients, dtype=np.int64)
    return DonorAssignment(recipients=recipients, donors=donors,
                           k=donor_counts(sample, recipients, donors),
                           match_values=match_values)


def match_on_scores(sample: SurveySample, scores) -> DonorAssignment:
    """Predictive-mean matching of every nonrespondent to a respondent."""
    scores = np.asarray(scores, dtype=np.float64)
    resp, miss = sample.respondents, sample.nonrespondents
    if resp.size == 0:
        raise NoRespondentsError("no respondents to act as donors")
    pos = match_scalar(scores[resp], scores[miss])
    return assign_donors(sample, resp, miss, pos, match_values=scores)


def match_on_covariates(sample: SurveySample, columns, method: str = "auto") -> DonorAssignment:
    """Nearest-neighbour matching on covariate ``columns`` (zero-based)."""
    resp, miss = sample.respondents, sample.nonrespondents
    if resp.size == 0:
        raise NoRespondentsError("no respondents to act as donors")
    xs = sample.x[:, list(columns)]
    pos = match_vector(xs[resp], xs[miss], method=method)
    return assign_donors(sample, resp, miss, pos, match_values=xs)
