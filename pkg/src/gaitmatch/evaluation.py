"""Gallery/probe retrieval metrics and the thickness-level protocol."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, ProtocolError, StructuralError

METRICS = ("euclidean", "cosine")
GALLERY_LEVEL = "THK0"
PROBE_LEVELS = tuple(f"THK{i}" for i in range(1, 10))


@dataclass(frozen=True)
class EmbeddingSet:
    subject_ids: tuple[str, ...]
    covariates: tuple[str | None, ...]
    vectors: np.ndarray

    def __post_init__(self):
        ids = tuple(str(s) for s in self.subject_ids)
        covs = tuple(None if c is None or c == "" else str(c) for c in self.covariates)
        vec = np.array(self.vectors, dtype=float)
        if vec.ndim == 1 and vec.size == 0:
            vec = vec.reshape(0, 0)
        if vec.ndim != 2:
            raise StructuralError(f"vectors must be 2-D, got shape {vec.shape}")
        if not (len(ids) == len(covs) == vec.shape[0]):
            raise StructuralError("subject_ids, covariates and vectors differ in length")
        if not np.all(np.isfinite(vec)):
            raise StructuralError("embedding vectors must be finite")
        vec.setflags(write=False)
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "vectors", vec)

    def __len__(self) -> int:
        return len(self.subject_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def select(self, mask) -> "EmbeddingSet":
        idx = np.flatnonzero(np.asarray(mask, dtype=bool))
        return EmbeddingSet(
            tuple(self.subject_ids[i] for i in idx),
            tuple(self.covariates[i] for i in idx),
            self.vectors[idx].reshape(len(idx), self.vectors.shape[1]),
        )

    def with_covariate(self, covariate: str) -> "EmbeddingSet":
        return self.select([c == covariate for c in self.covariates])


def distance_matrix(probes, gallery, metric: str = "euclidean") -> np.ndarray:
    """Pairwise ``(n_probe, n_gallery)`` distances.

    ``cosine`` is ``1 - cos``; a zero vector has cosine distance 1 to everything.
    """
    p = np.asarray(getattr(probes, "vectors", probes), dtype=float)
    g = np.asarray(getattr(gallery, "vectors", gallery), dtype=float)
    if p.ndim != 2 or g.ndim != 2 or p.shape[1] != g.shape[1]:
        raise StructuralError(f"dimension mismatch between probes {p.shape} and gallery {g.shape}")
    if metric == "euclidean":
        return np.sqrt(((p[:, None, :] - g[None, :, :]) ** 2).sum(axis=-1))
    if metric == "cosine":
        pn = np.linalg.norm(p, axis=1, keepdims=True)
        gn = np.linalg.norm(g, axis=1, keepdims=True)
        pu = np.divide(p, pn, out=np.zeros_like(p), where=pn > 0)
        gu = np.divide(g, gn, out=np.zeros_like(g), where=gn > 0)
        return 1.0 - np.clip(pu @ gu.T, -1.0, 1.0)
    raise StructuralError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass(frozen=True)
class RetrievalScores:
    """Per-probe outcomes; excluded probes have no gallery positive."""

    hits: np.ndarray
    average_precision: np.ndarray
    excluded: int

    @property
    def n_valid(self) -> int:
        return int(self.hits.size)

    @property
    def rank1(self) -> float:
        return float(self.hits.mean() * 100.0) if self.hits.size else float("nan")

    @property
    def mean_ap(self) -> float:
        return float(self.average_precision.mean() * 100.0) if self.hits.size else float("nan")


def average_precision(ranked_matches: np.ndarray) -> float:
    """AP of a boolean relevance vector sorted best-first."""
    ranked_matches = np.asarray(ranked_matches, dtype=bool)
    n_pos = int(ranked_matches.sum())
    if n_pos == 0:
        return float("nan")
    ranks = np.flatnonzero(ranked_matches) + 1
    precision_at_hits = np.arange(1, n_pos + 1) / ranks
    return float(precision_at_hits.mean())


def retrieval_scores(probes: EmbeddingSet, gallery: EmbeddingSet, metric: str = "euclidean") -> RetrievalScores:
    if len(gallery) == 0:
        raise EmptyInputError("gallery is empty")
    dist = distance_matrix(probes, gallery, metric)
    gids = np.array(gallery.subject_ids, dtype=object)
    hits, aps = [], []
    excluded = 0
    for i, pid in enumerate(probes.subject_ids):
        matches = gids == pid
        if not matches.any():
            excluded += 1
            continue
        # stable sort: equal distances keep gallery order, so the lowest index wins ties
        order = np.argsort(dist[i], kind="stable")
        ranked = matches[order]
        hits.append(bool(ranked[0]))
        aps.append(average_precision(ranked))
    return RetrievalScores(np.array(hits, dtype=bool), np.array(aps, dtype=float), excluded)


def rank1(probes: EmbeddingSet, gallery: EmbeddingSet, metric: str = "euclidean") -> float:
    """Percentage of probes whose nearest gallery entry shares their subject."""
    return retrieval_scores(probes, gallery, metric).rank1


def mean_average_precision(probes: EmbeddingSet, gallery: EmbeddingSet, metric: str = "euclidean") -> float:
    """Mean over probes of AP on the full gallery ranking, as a percentage."""
    return retrieval_scores(probes, gallery, metric).mean_ap


@dataclass(frozen=True)
class LevelResult:
    covariate: str
    rank1: float
    mean_ap: float
    n_probes: int
    n_excluded: int


@dataclass(frozen=True)
class EvalReport:
    levels: tuple[LevelResult, ...]
    rank1: float
    mean_ap: float
    n_gallery: int
    n_probes: int
    n_excluded: int
    gallery_covariate: str = GALLERY_LEVEL
    metric: str = "euclidean"

    def as_dict(self) -> dict[str, float | int | str]:
        out: dict[str, float | int | str] = {
            "metric": self.metric,
            "gallery": self.gallery_covariate,
            "gallery_count": self.n_gallery,
        }
        for lv in self.levels:
            out[f"{lv.covariate}.R1"] = lv.rank1
            out[f"{lv.covariate}.mAP"] = lv.mean_ap
            out[f"{lv.covariate}.probes"] = lv.n_probes
            out[f"{lv.covariate}.excluded"] = lv.n_excluded
        out["AVG.R1"] = self.rank1
        out["AVG.mAP"] = self.mean_ap
        out["AVG.probes"] = self.n_probes
        out["AVG.excluded"] = self.n_excluded
        return out

    def rows(self) -> list[tuple[str, int, int, float, float]]:
        """CSV rows ``(level, probes, excluded, R1, mAP)`` ending with AVG."""
        rows = [(lv.covariate, lv.n_probes, lv.n_excluded, lv.rank1, lv.mean_ap) for lv in self.levels]
        rows.append(("AVG", self.n_probes, self.n_excluded, self.rank1, self.mean_ap))
        return rows


def evaluate_protocol(
    embeddings: EmbeddingSet,
    gallery_covariate: str = GALLERY_LEVEL,
    probe_covariates: Sequence[str] = PROBE_LEVELS,
    metric: str = "euclidean",
) -> EvalReport:
    """Per-level R1/mAP against a fixed gallery level, plus the probe-weighted average.

    Levels without any probe are skipped. A level whose probes all lack a
    gallery positive reports NaN and carries no weight in the average.
    """
    gallery = embeddings.with_covariate(gallery_covariate)
    if len(gallery) == 0:
        raise ProtocolError(f"no embeddings tagged with gallery covariate {gallery_covariate!r}")
    levels = []
    r1_sum = ap_sum = 0.0
    n_valid = n_excl = 0
    for cov in probe_covariates:
        probes = embeddings.with_covariate(cov)
        if len(probes) == 0:
            continue
        s = retrieval_scores(probes, gallery, metric)
        levels.append(LevelResult(cov, s.rank1, s.mean_ap, s.n_valid, s.excluded))
        if s.n_valid:
            r1_sum += s.rank1 * s.n_valid
            ap_sum += s.mean_ap * s.n_valid
        n_valid += s.n_valid
        n_excl += s.excluded
    avg_r1 = r1_sum / n_valid if n_valid else float("nan")
    avg_ap = ap_sum / n_valid if n_valid else float("nan")
    return EvalReport(tuple(levels), avg_r1, avg_ap, len(gallery), n_valid, n_excl, gallery_covariate, metric)
