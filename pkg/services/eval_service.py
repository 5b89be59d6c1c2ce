"""
Retrieval evaluation: split embeddings, query-gallery distances, CMC and mAP.
"""
import logging
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from tqdm import tqdm

from core.base_classes import BaseCalculator
from core.exceptions import ConfigError, DataError, DimensionError, ProtocolError
from core.tensor import DenseTensor, as_tensor
from models.retrieval import EvalReport, RetrievalTable
from services.backbone_service import VideoReIDModel
from services.dataset_service import TrackletDataset
from services.sampling_service import rrs_sample
from utils.data_handler import LsttTensorHandler, ReportHandler

logger = logging.getLogger(__name__)

METRICS = ("cosine", "euclidean")


def embed_split(model: VideoReIDModel, dataset: TrackletDataset, split: str, frames: int,
                batch_size: int = 8, progress: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Embeddings [N,C], identity ids and camera ids of every tracklet in ``split``"""
    tracklets = dataset.tracklets(split)
    if not tracklets:
        raise DataError(f"Split '{split}' is empty")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")

    rows: List[np.ndarray] = []
    starts = range(0, len(tracklets), batch_size)
    for start in tqdm(starts, desc=f"embed {split}", disable=not progress):
        chunk = tracklets[start:start + batch_size]
        clips = [dataset.load_clip(rrs_sample(t, frames, "eval")) for t in chunk]
        vectors, _ = model.encode_batch(clips)
        rows.append(vectors.data)
    ids = np.array([t.identity_id for t in tracklets], dtype=np.int64)
    cams = np.array([t.camera_id for t in tracklets], dtype=np.int64)
    return np.concatenate(rows), ids, cams


def zero_norm_count(q, g) -> int:
    """Number of all-zero rows across both tables"""
    q, g = as_tensor(q).data, as_tensor(g).data
    return int((np.linalg.norm(q, axis=1) == 0).sum() + (np.linalg.norm(g, axis=1) == 0).sum())


def distance_matrix(q, g, metric: str = "cosine") -> DenseTensor:
    """[Q,G] distances; a pair involving a zero-norm row has cosine distance 1"""
    q, g = as_tensor(q).data.astype(np.float64), as_tensor(g).data.astype(np.float64)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise DimensionError(f"distance_matrix: incompatible shapes {list(q.shape)} and {list(g.shape)}")
    if metric not in METRICS:
        raise ConfigError(f"Unknown metric '{metric}', expected one of {METRICS}")
    if metric == "euclidean":
        return DenseTensor(cdist(q, g, "euclidean"))

    q_norm = np.linalg.norm(q, axis=1)
    g_norm = np.linalg.norm(g, axis=1)
    q_zero, g_zero = q_norm == 0, g_norm == 0
    q_unit = q / np.where(q_zero, 1.0, q_norm)[:, None]
    g_unit = g / np.where(g_zero, 1.0, g_norm)[:, None]
    dists = np.clip(1.0 - q_unit @ g_unit.T, 0.0, 2.0)
    dists[q_zero, :] = 1.0
    dists[:, g_zero] = 1.0
    return DenseTensor(dists)


def average_precision(matches: np.ndarray) -> float:
    """Mean of precision@position over the positions of correct matches"""
    hits = np.flatnonzero(matches)
    return float(np.mean((np.arange(len(hits)) + 1) / (hits + 1)))


class RetrievalCalculator(BaseCalculator):
    """CMC and mAP under the query/gallery protocol (Single Responsibility Principle)

    Gallery entries sharing both identity and camera with the query are dropped; ties in
    distance keep ascending gallery index.
    """

    def __init__(self, ranks: Sequence[int] = (1, 5)):
        self.ranks = tuple(sorted(set(int(k) for k in ranks) | {1, 5}))

    def _validate_inputs(self, **kwargs) -> bool:
        table, dists = kwargs.get("table"), kwargs.get("dists")
        if table is None or dists is None:
            return False
        shape = list(np.shape(as_tensor(dists).data))
        if shape != [table.num_queries, table.num_gallery]:
            raise DimensionError(f"Distance matrix {shape} does not match "
                                 f"{table.num_queries} queries x {table.num_gallery} gallery")
        return True

    def _perform_calculation(self, table: RetrievalTable = None, dists=None, **kwargs) -> EvalReport:
        dists = as_tensor(dists).data
        hits_at = {k: 0 for k in self.ranks}
        aps: List[float] = []
        skipped = 0
        for i in range(table.num_queries):
            order = np.argsort(dists[i], kind="stable")
            junk = (table.gallery_ids[order] == table.query_ids[i]) & \
                   (table.gallery_cams[order] == table.query_cams[i])
            ranked = order[~junk]
            matches = table.gallery_ids[ranked] == table.query_ids[i]
            if not matches.any():
                skipped += 1
                continue
            first = int(np.argmax(matches))
            for k in self.ranks:
                hits_at[k] += first < k
            aps.append(average_precision(matches))

        if not aps:
            raise ProtocolError(f"No valid queries among {table.num_queries}")
        if skipped:
            logger.info("Skipped %d queries without a cross-camera match", skipped)
        valid = len(aps)
        return EvalReport(rank_k={k: hits_at[k] / valid for k in self.ranks},
                          map_score=float(np.mean(aps)), num_valid_queries=valid,
                          num_skipped_queries=skipped, per_query_ap=aps)


def cmc_map(table: RetrievalTable, dists, ranks: Sequence[int] = (1, 5)) -> EvalReport:
    return RetrievalCalculator(ranks).calculate(table=table, dists=dists)


class EvaluationService:
    """Embeds query and gallery splits, scores them and writes the report files"""

    def __init__(self, model: VideoReIDModel, dataset: TrackletDataset, frames: int = 8,
                 batch_size: int = 8, metric: str = "cosine", ranks: Sequence[int] = (1, 5),
                 report_handler: Optional[ReportHandler] = None,
                 tensor_handler: Optional[LsttTensorHandler] = None, progress: bool = False):
        self.model = model
        self.dataset = dataset
        self.frames = frames
        self.batch_size = batch_size
        self.metric = metric
        self.ranks = ranks
        self.report_handler = report_handler or ReportHandler()
        self.tensor_handler = tensor_handler or LsttTensorHandler()
        self.progress = progress

    def build_table(self) -> RetrievalTable:
        q, q_ids, q_cams = embed_split(self.model, self.dataset, "query", self.frames,
                                       self.batch_size, self.progress)
        g, g_ids, g_cams = embed_split(self.model, self.dataset, "gallery", self.frames,
                                       self.batch_size, self.progress)
        return RetrievalTable(q, g, q_ids, g_ids, q_cams, g_cams)

    def evaluate(self, table: Optional[RetrievalTable] = None) -> EvalReport:
        table = table or self.build_table()
        dists = distance_matrix(table.query_embeddings, table.gallery_embeddings, self.metric)
        report = cmc_map(table, dists, self.ranks)
        report.zero_norm_embeddings = zero_norm_count(table.query_embeddings, table.gallery_embeddings)
        if report.zero_norm_embeddings:
            logger.warning("%d zero-norm embeddings; their cosine distances are set to 1",
                           report.zero_norm_embeddings)
        logger.info("R1=%.4f R5=%.4f mAP=%.4f valid=%d", report.rank_k[1], report.rank_k[5],
                    report.map_score, report.num_valid_queries)
        return report

    def write_report(self, report: EvalReport, output_dir: str) -> None:
        self.report_handler.save_data(report.to_frame(), os.path.join(output_dir, "eval_report.tsv"))
        self.report_handler.save_key_values(report.to_key_values(), os.path.join(output_dir, "eval_report.txt"))

    def dump_embeddings(self, table: RetrievalTable, output_dir: str) -> None:
        """Write embeddings and labels as portable tensors"""
        arrays = {"query_embeddings": table.query_embeddings, "gallery_embeddings": table.gallery_embeddings,
                  "query_ids": table.query_ids, "gallery_ids": table.gallery_ids,
                  "query_cams": table.query_cams, "gallery_cams": table.gallery_cams}
        for name, array in arrays.items():
            self.tensor_handler.save_data(np.asarray(array, dtype=np.float64 if array.dtype.kind == "i"
                                                     else array.dtype), os.path.join(output_dir, f"{name}.lst"))
