"""Semantic relation filter: score ordered proposal pairs, keep a sparse graph.

A pair (i, j) is described by the class embeddings of both proposals plus
both boxes normalized to the pair's union box, and scored by a small MLP
with a sigmoid output.  Scores below the threshold are dropped and only the
top-k survive, which keeps the downstream relation graph sparse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, binary_logistic_loss, flatten, sigmoid
from .config import Dims
from .nn import TwoLayerMlp, make_mlp
from .scenes import Box, EmbeddingTable, SceneRecord, iou, normalize_box, union_box


@dataclass
class SrfParams:
    """Two-layer scoring MLP over [e_i, b~_i, b~_j, e_j]."""

    mlp: TwoLayerMlp

    def tensors(self) -> list[Tensor]:
        return self.mlp.tensors()

    def named(self, prefix: str = "srf") -> dict[str, Tensor]:
        return self.mlp.named(prefix)


def init_srf_params(dims: Dims, rng: np.random.Generator) -> SrfParams:
    d_in = 2 * dims.d_emb + 8
    return SrfParams(mlp=make_mlp(rng, d_in, 2 * d_in, 1))


def ordered_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def pair_input(e_i: np.ndarray, e_j: np.ndarray, box_i: Box, box_j: Box) -> np.ndarray:
    u = union_box(box_i, box_j)
    return np.concatenate([e_i, normalize_box(box_i, u), normalize_box(box_j, u), e_j])


def pair_inputs(scene: SceneRecord, table: EmbeddingTable,
                pairs: list[tuple[int, int]]) -> np.ndarray:
    """Stack filter inputs for the given ordered pairs, one row per pair."""
    emb = table.embed(np.stack([p.label_dist for p in scene.proposals])) \
        if scene.proposals else np.zeros((0, table.dim))
    rows = np.zeros((len(pairs), 2 * table.dim + 8))
    for r, (i, j) in enumerate(pairs):
        rows[r] = pair_input(emb[i], emb[j], scene.proposals[i].box, scene.proposals[j].box)
    return rows


def pair_logits(inputs: np.ndarray, params: SrfParams) -> Tensor:
    """Raw scores for rows of filter inputs (training target space)."""
    return flatten(params.mlp(Tensor(np.atleast_2d(inputs))))


def score_pairs(inputs: np.ndarray, params: SrfParams) -> np.ndarray:
    if len(inputs) == 0:
        return np.zeros(0)
    return sigmoid(pair_logits(inputs, params)).data


def score_pair(e_i, e_j, box_i: Box, box_j: Box, params: SrfParams) -> float:
    return float(score_pairs(pair_input(e_i, e_j, box_i, box_j)[None, :], params)[0])


def prune_graph(pairs: list[tuple[int, int]], scores: np.ndarray, top_k: int,
                threshold: float) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Keep at most ``top_k`` pairs scoring above ``threshold``.

    Ordering is score descending with (subject, object) index ascending as
    the tie break, so identical inputs always retain identical graphs.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if len(pairs) != scores.shape[0]:
        raise ValueError("prune_graph: one score per pair required")
    order = sorted(range(len(pairs)), key=lambda r: (-scores[r], pairs[r][0], pairs[r][1]))
    kept = [r for r in order if scores[r] >= threshold][:top_k]
    return [pairs[r] for r in kept], scores[kept]


def srf_training_labels(scene: SceneRecord, iou_threshold: float = 0.5,
                        ) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Label every ordered proposal pair 1 iff it localizes some gt triplet.

    Pair (i, j) is positive when a gt triplet (s, p, o) exists whose subject
    box overlaps proposal i and whose object box overlaps proposal j, both
    above the IoU threshold.
    """
    pairs = ordered_pairs(scene.n_proposals)
    labels = np.zeros(len(pairs))
    if scene.gt_triplets:
        overlap = np.array([[iou(p.box, g.box) > iou_threshold for g in scene.gt_objects]
                            for p in scene.proposals])
        for r, (i, j) in enumerate(pairs):
            for t in scene.gt_triplets:
                if overlap[i, t.sub] and overlap[j, t.obj]:
                    labels[r] = 1.0
                    break
    return pairs, labels


def srf_loss(inputs: np.ndarray, labels: np.ndarray, params: SrfParams) -> Tensor:
    return binary_logistic_loss(pair_logits(inputs, params), labels)


def confidence_fallback(label_dists: np.ndarray, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Pair scores without the filter: product of the proposals' best
    non-background confidences."""
    dists = np.asarray(label_dists, dtype=np.float64)
    if dists.ndim != 2 or dists.shape[1] < 2:
        raise ValueError("confidence_fallback: need rows over >= 2 classes")
    best = dists[:, 1:].max(axis=1)
    return np.array([best[i] * best[j] for i, j in pairs])
