from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from core.exceptions import DataError, DimensionError


@dataclass
class RetrievalTable:
    """Query and gallery embeddings with their identity and camera labels"""
    query_embeddings: np.ndarray
    gallery_embeddings: np.ndarray
    query_ids: np.ndarray
    gallery_ids: np.ndarray
    query_cams: np.ndarray
    gallery_cams: np.ndarray

    def __post_init__(self):
        self.query_embeddings = np.asarray(self.query_embeddings)
        self.gallery_embeddings = np.asarray(self.gallery_embeddings)
        for name in ("query_ids", "gallery_ids", "query_cams", "gallery_cams"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        q, g = len(self.query_embeddings), len(self.gallery_embeddings)
        if len(self.query_ids) != q or len(self.query_cams) != q:
            raise DataError(f"Query labels do not match {q} query embeddings")
        if len(self.gallery_ids) != g or len(self.gallery_cams) != g:
            raise DataError(f"Gallery labels do not match {g} gallery embeddings")
        if self.query_embeddings.ndim != 2 or self.gallery_embeddings.ndim != 2 \
                or self.query_embeddings.shape[1] != self.gallery_embeddings.shape[1]:
            raise DimensionError(f"Embedding tables {self.query_embeddings.shape} and "
                                 f"{self.gallery_embeddings.shape} are incompatible")

    @property
    def num_queries(self) -> int:
        return len(self.query_ids)

    @property
    def num_gallery(self) -> int:
        return len(self.gallery_ids)


@dataclass
class EvalReport:
    """CMC accuracies by rank, mAP and query bookkeeping"""
    rank_k: Dict[int, float]
    map_score: float
    num_valid_queries: int
    num_skipped_queries: int = 0
    zero_norm_embeddings: int = 0
    per_query_ap: List[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        ranks = sorted(self.rank_k)
        values = [self.rank_k[k] for k in ranks]
        if any(not 0.0 <= v <= 1.0 for v in values + [self.map_score]):
            raise ValueError(f"Accuracies must lie in [0, 1]: {self.rank_k}, mAP {self.map_score}")
        if any(a > b for a, b in zip(values, values[1:])):
            raise ValueError(f"CMC must be nondecreasing in k: {self.rank_k}")

    def to_frame(self) -> pd.DataFrame:
        """One-row table: R<k> columns, mAP, valid and skipped query counts"""
        row = {f"R{k}": self.rank_k[k] for k in sorted(self.rank_k)}
        row.update({"mAP": self.map_score, "valid": self.num_valid_queries,
                    "skipped": self.num_skipped_queries})
        return pd.DataFrame([row])

    def to_key_values(self) -> Dict[str, str]:
        values = {f"R{k}": f"{self.rank_k[k]:.6f}" for k in sorted(self.rank_k)}
        values["mAP"] = f"{self.map_score:.6f}"
        values["valid"] = str(self.num_valid_queries)
        values["skipped"] = str(self.num_skipped_queries)
        return values
