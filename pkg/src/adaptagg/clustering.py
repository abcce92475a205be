"""Clustering of per-slice feature vectors and representative selection.

k-means (k-means++ seeding, Lloyd iterations, best of several seeds) and
agglomerative clustering with single, average, complete or Ward linkage.
All linkages run through one Lance-Williams merge loop. Ties are always
resolved towards the lowest index so results are reproducible.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .timeseries import HorizonData

logger = logging.getLogger(__name__)

STD_EPS = 1e-12
LINKAGES = ("single", "average", "complete", "ward")
METHODS = ("kmeans", "agglomerative")


class ClusteringError(ValueError):
    pass


# ---------------------------------------------------------------- feature matrix


@dataclass(frozen=True)
class FeatureMatrix:
    """One feature row per slice (ordered by slice index), standardised.

    ``raw`` keeps the untouched values; ``rows = (raw - mean) / scale`` where
    ``scale`` is the column standard deviation, or 1 for constant columns.
    """

    rows: np.ndarray
    raw: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray
    mode: str = "adaptive"
    names: tuple[str, ...] = ()
    slice_length: int = 168

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def invert(self, rows: np.ndarray | None = None) -> np.ndarray:
        rows = self.rows if rows is None else np.asarray(rows, dtype=float)
        return rows * self.scale + self.mean


def standardize(
    raw,
    mode: str = "adaptive",
    names: Sequence[str] = (),
    slice_length: int = 168,
    enabled: bool = True,
) -> FeatureMatrix:
    """Zero-mean, unit-variance columns; constant columns become zeros.

    With ``enabled=False`` the rows are the raw values (mean 0, scale 1 stored).
    """
    X = np.asarray(raw, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ClusteringError("feature matrix must be a non-empty 2-D array")
    if X.shape[0] < 2:
        raise ClusteringError("need at least two rows to standardise")
    std = X.std(axis=0)
    # exact ties first: a column of equal values can show a rounding-level std
    constant = (np.ptp(X, axis=0) == 0) | (std <= STD_EPS)
    if enabled:
        mean = X.mean(axis=0)
        scale = np.where(constant, 1.0, std)
    else:
        mean = np.zeros(X.shape[1])
        scale = np.ones(X.shape[1])
    rows = (X - mean) / scale
    if enabled:
        rows[:, constant] = 0.0
    if constant.any():
        logger.info("constant feature columns: %s", np.flatnonzero(constant).tolist())
    for arr in (rows, X, mean, scale, constant):
        arr.setflags(write=False)
    return FeatureMatrix(rows, X, mean, scale, constant, mode, tuple(names), slice_length)


# ------------------------------------------------------------ aggregation result


@dataclass
class AggregationResult:
    """Cluster membership, one representative per cluster and integer weights.

    ``representatives[c]`` is a slice index (medoid mode) or ``None`` when the
    representative is the synthetic mean profile in ``centroid_profiles[c]``.
    Clusters are numbered in order of their lowest member slice.
    """

    assignments: np.ndarray
    representatives: list[int | None]
    weights: np.ndarray
    slice_length: int = 168
    centroid_profiles: list[dict[str, np.ndarray]] | None = None
    method: dict[str, Any] = field(default_factory=dict)
    dispersion: float = 0.0

    @property
    def k(self) -> int:
        return int(self.weights.size)

    @property
    def slice_count(self) -> int:
        return int(self.assignments.size)

    @property
    def centroid_mode(self) -> bool:
        return self.centroid_profiles is not None

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == c)

    def selection_weights(self) -> np.ndarray:
        """Weight per slice: 0 unless the slice is a representative."""
        out = np.zeros(self.slice_count, dtype=int)
        for rep, w in zip(self.representatives, self.weights):
            if rep is not None:
                out[rep] = w
        return out

    def representative_data(self, data: HorizonData) -> list[HorizonData]:
        reps = []
        for c, idx in enumerate(self.representatives):
            if idx is None:
                prof = self.centroid_profiles[c]
                reps.append(HorizonData(
                    load=prof["load"],
                    profiles={k: v for k, v in prof.items() if k != "load"},
                    start_timestamp=data.start_timestamp,
                ))
            else:
                reps.append(data.window(int(idx) * self.slice_length, self.slice_length))
        return reps

    def validate(self) -> None:
        if int(self.weights.sum()) != self.slice_count:
            raise ClusteringError("weights do not sum to the slice count")
        counts = np.bincount(self.assignments, minlength=self.k)
        if counts.size != self.k or np.any(counts != self.weights):
            raise ClusteringError("weights differ from cluster sizes")
        for c, rep in enumerate(self.representatives):
            if rep is not None and self.assignments[rep] != c:
                raise ClusteringError(f"medoid {rep} is not a member of cluster {c}")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "slice_length": self.slice_length,
            "assignments": self.assignments.tolist(),
            "representatives": [None if r is None else int(r) for r in self.representatives],
            "weights": self.weights.tolist(),
            "dispersion": self.dispersion,
            "method": dict(self.method),
        }
        if self.centroid_profiles is not None:
            d["centroid_profiles"] = [{k: v.tolist() for k, v in p.items()} for p in self.centroid_profiles]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AggregationResult":
        profiles = d.get("centroid_profiles")
        out = cls(
            assignments=np.asarray(d["assignments"], dtype=int),
            representatives=[None if r is None else int(r) for r in d["representatives"]],
            weights=np.asarray(d["weights"], dtype=int),
            slice_length=int(d.get("slice_length", 168)),
            centroid_profiles=None if profiles is None else [
                {k: np.asarray(v, dtype=float) for k, v in p.items()} for p in profiles
            ],
            method=dict(d.get("method", {})),
            dispersion=float(d.get("dispersion", 0.0)),
        )
        out.validate()
        return out


def canonical_labels(labels) -> np.ndarray:
    """Renumber clusters by order of first appearance."""
    labels = np.asarray(labels)
    mapping: dict[int, int] = {}
    for lab in labels:
        mapping.setdefault(int(lab), len(mapping))
    return np.array([mapping[int(lab)] for lab in labels], dtype=int)


def within_cluster_ss(X: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for c in np.unique(labels):
        pts = X[labels == c]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total


def medoids(X: np.ndarray, labels: np.ndarray) -> list[int]:
    """Per cluster, the member closest to the cluster mean (lowest index on ties)."""
    reps = []
    for c in range(int(labels.max()) + 1):
        idx = np.flatnonzero(labels == c)
        centre = X[idx].mean(axis=0)
        dist = np.sqrt(((X[idx] - centre) ** 2).sum(axis=1))
        reps.append(int(idx[int(np.argmin(dist))]))
    return reps


def _result(features: FeatureMatrix, labels, method: dict[str, Any]) -> AggregationResult:
    labels = canonical_labels(labels)
    X = features.rows
    out = AggregationResult(
        assignments=labels,
        representatives=medoids(X, labels),
        weights=np.bincount(labels).astype(int),
        slice_length=features.slice_length,
        method={"mode": features.mode, "centroid_mode": False, **method},
        dispersion=within_cluster_ss(X, labels),
    )
    out.validate()
    return out


def _check_k(features: FeatureMatrix, k: int) -> None:
    if not 1 <= k <= features.n:
        raise ClusteringError(f"k={k} must lie between 1 and the {features.n} rows")


# ----------------------------------------------------------------------- k-means


def _sq_dist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centres = [X[int(rng.integers(n))]]
    d2 = ((X - centres[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(np.argmax(d2))  # all points coincide with a centre
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centres.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centres)


def lloyd(X: np.ndarray, centres: np.ndarray, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations until the assignment stops changing.

    Returns labels, centres and the objective after each assignment step;
    the objective never increases (checked).
    """
    C = np.array(centres, dtype=float)
    k = C.shape[0]
    labels = None
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _sq_dist(X, C)
        new = np.argmin(d2, axis=1)
        # an empty cluster takes the point farthest from its current centre
        for c in range(k):
            if not np.any(new == c):
                own = d2[np.arange(X.shape[0]), new]
                movable = np.array([np.sum(new == new[i]) > 1 for i in range(X.shape[0])])
                far = int(np.argmax(np.where(movable, own, -1.0)))
                new[far] = c
                C[c] = X[far]
        for c in range(k):
            C[c] = X[new == c].mean(axis=0)
        cost = float(((X - C[new]) ** 2).sum())
        if history and cost > history[-1] * (1 + 1e-12) + 1e-12:
            raise RuntimeError(f"k-means objective increased from {history[-1]} to {cost}")
        history.append(cost)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return labels, C, history


def kmeans(
    features: FeatureMatrix,
    k: int,
    seed: int = 0,
    n_init: int = 10,
    max_iter: int = 300,
    init_centres: np.ndarray | None = None,
) -> AggregationResult:
    """Best of ``n_init`` k-means++ restarts (plus ``init_centres`` if given)."""
    _check_k(features, k)
    X = np.asarray(features.rows, dtype=float)
    rng = np.random.default_rng(seed)
    starts = [kmeans_pp_init(X, k, rng) for _ in range(n_init)]
    if init_centres is not None:
        starts.append(np.asarray(init_centres, dtype=float))
    best = None
    for C0 in starts:
        labels, C, hist = lloyd(X, C0, max_iter)
        if best is None or hist[-1] < best[2] - 1e-12 * max(1.0, best[2]):
            best = (labels, C, hist[-1])
    return _result(features, best[0], {"algorithm": "kmeans", "k": k, "seed": seed, "n_init": n_init})


# ---------------------------------------------------------------- agglomerative


@dataclass(frozen=True)
class Merge:
    a: frozenset
    b: frozenset
    height: float


def merge_sequence(X: np.ndarray, linkage: str = "single") -> list[Merge]:
    """Full bottom-up merge sequence via Lance-Williams updates.

    Heights are Euclidean for single/average/complete; for Ward they are
    ``sqrt(2 |A| |B| / (|A| + |B|)) * ||mean(A) - mean(B)||``. A merged cluster
    keeps the lower of the two slots; ties go to the lowest slot pair.
    """
    if linkage not in LINKAGES:
        raise ClusteringError(f"linkage must be one of {LINKAGES}")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    D = np.sqrt(_sq_dist(X, X))
    if linkage == "ward":
        D = D ** 2
    D[np.diag_indices(n)] = np.inf
    size = np.ones(n)
    members = [frozenset([i]) for i in range(n)]
    active = np.ones(n, dtype=bool)
    merges: list[Merge] = []
    for _ in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], D, np.inf)
        masked = np.triu(masked, 1) + np.tril(np.full((n, n), np.inf))
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        dij = D[i, j]
        height = float(np.sqrt(dij)) if linkage == "ward" else float(dij)
        merges.append(Merge(members[i], members[j], height))
        ni, nj = size[i], size[j]
        if linkage == "single":
            new = np.minimum(D[i], D[j])
        elif linkage == "complete":
            new = np.maximum(D[i], D[j])
        elif linkage == "average":
            new = (ni * D[i] + nj * D[j]) / (ni + nj)
        else:
            nk = size
            new = ((ni + nk) * D[i] + (nj + nk) * D[j] - nk * dij) / (ni + nj + nk)
        D[i, :] = new
        D[:, i] = new
        D[i, i] = np.inf
        active[j] = False
        D[j, :] = np.inf
        D[:, j] = np.inf
        size[i] = ni + nj
        members[i] = members[i] | members[j]
    return merges


def cut(merges: list[Merge], n: int, k: int) -> np.ndarray:
    """Labels after replaying the first ``n - k`` merges."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for m in merges[: n - k]:
        ra, rb = find(min(m.a)), find(min(m.b))
        parent[max(ra, rb)] = min(ra, rb)
    return canonical_labels([find(i) for i in range(n)])


def agglomerative(features: FeatureMatrix, k: int, linkage: str = "single") -> AggregationResult:
    _check_k(features, k)
    merges = merge_sequence(features.rows, linkage)
    labels = cut(merges, features.n, k)
    return _result(features, labels, {"algorithm": "agglomerative", "linkage": linkage, "k": k})


def cluster(
    features: FeatureMatrix,
    k: int,
    method: str = "agglomerative",
    linkage: str = "single",
    seed: int = 0,
    n_init: int = 10,
) -> AggregationResult:
    if method == "kmeans":
        return kmeans(features, k, seed=seed, n_init=n_init)
    if method == "agglomerative":
        return agglomerative(features, k, linkage)
    raise ClusteringError(f"method must be one of {METHODS}")


# ------------------------------------------------------------- representatives


def select_representatives(
    result: AggregationResult,
    features: FeatureMatrix,
    data: HorizonData | None = None,
    centroid_mode: bool = False,
) -> AggregationResult:
    """Medoid slices, or (``centroid_mode``) element-wise mean member profiles."""
    if result.k < 1:
        raise ClusteringError("no clusters")
    reps = medoids(features.rows, result.assignments)
    if not centroid_mode:
        out = replace(result, representatives=reps, centroid_profiles=None,
                      method={**result.method, "centroid_mode": False})
        out.validate()
        return out
    if data is None:
        raise ClusteringError("centroid mode needs the raw horizon data")
    L = result.slice_length
    profiles = []
    for c in range(result.k):
        idx = result.members(c)
        windows = [data.window(int(i) * L, L) for i in idx]
        bundle = {"load": np.mean([w.load for w in windows], axis=0)}
        for name in data.resources:
            bundle[name] = np.mean([w.profiles[name] for w in windows], axis=0)
        profiles.append(bundle)
    out = replace(result, representatives=[None] * result.k, centroid_profiles=profiles,
                  method={**result.method, "centroid_mode": True})
    out.validate()
    return out


# ------------------------------------------------------------------------ elbow


def elbow_scan(
    features: FeatureMatrix,
    k_values: Sequence[int],
    method: str = "agglomerative",
    linkage: str = "single",
    seed: int = 0,
    n_init: int = 10,
) -> list[tuple[int, float]]:
    """Within-cluster sum of squares for each ``k`` (must be non-increasing).

    Hierarchical cuts are nested, so the curve is monotone by construction.
    For k-means each ``k`` also tries the previous solution's centres plus the
    point farthest from them, which keeps the best-of-restarts curve monotone.
    """
    ks = list(k_values)
    if ks != sorted(ks) or len(set(ks)) != len(ks):
        raise ClusteringError("k values must be strictly increasing")
    for k in ks:
        _check_k(features, k)
    X = features.rows
    curve: list[tuple[int, float]] = []
    if method == "agglomerative":
        merges = merge_sequence(X, linkage)
        for k in ks:
            curve.append((k, within_cluster_ss(X, cut(merges, features.n, k))))
    elif method == "kmeans":
        prev_centres = None
        for k in ks:
            init = None
            if prev_centres is not None:
                init = prev_centres
                while init.shape[0] < k:
                    d2 = _sq_dist(X, init).min(axis=1)
                    init = np.vstack([init, X[int(np.argmax(d2))]])
            res = kmeans(features, k, seed=seed, n_init=n_init, init_centres=init)
            curve.append((k, res.dispersion))
            prev_centres = np.array([X[res.assignments == c].mean(axis=0) for c in range(res.k)])
    else:
        raise ClusteringError(f"method must be one of {METHODS}")
    for (k0, d0), (k1, d1) in zip(curve, curve[1:]):
        if d1 > d0 * (1 + 1e-9) + 1e-12:
            raise AssertionError(f"dispersion rose from {d0} at k={k0} to {d1} at k={k1}")
    return curve
