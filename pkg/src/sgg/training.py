"""Stage-wise training: the relation filter first, then the full model.

Both stages run SGD with momentum on one scene per step.  Object targets
come from IoU matching against gt boxes (best match above the threshold,
else background); pairs matching a gt triplet at both ends take its
predicate as target and the rest are trained toward no-relation, with
negatives subsampled to at most ``negative_ratio`` times the positives per
scene.  The main stage supervises every ordered pair, not only the ones the
(frozen) relation filter would retain, so the classifier stays calibrated
on whatever graph the filter or the confidence fallback keeps at inference;
each scene's pair set is fixed and can be prepared once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import SgdMomentum, Tensor, add, backward, cross_entropy_with_softmax, \
    gather_rows, softmax
from .config import Dims, ModelConfig
from .filter import SrfParams, init_srf_params, ordered_pairs, pair_inputs, srf_loss, \
    srf_training_labels
from .inference import object_logits, relation_logits
from .message_passing import build_message_graph, run_message_passing
from .model import ModelParams, init_model_params
from .relation_features import fuse_relation_features, rasterize_mask, spatial_features, \
    union_visual
from .scenes import EmbeddingTable, SceneRecord, iou


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    lr: float = 5e-3
    momentum: float = 0.9
    seed: int = 0
    negative_ratio: float = 3.0
    match_iou: float = 0.5

    def __post_init__(self):
        if self.epochs < 0 or self.lr <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("bad optimizer settings")
        if self.negative_ratio < 0 or not 0.0 < self.match_iou < 1.0:
            raise ValueError("bad supervision settings")


# ---------------------------------------------------------------------------
# stage 1: relation filter


def train_srf(scenes: list[SceneRecord], embed: EmbeddingTable, dims: Dims,
              tcfg: TrainConfig) -> tuple[SrfParams, list[float]]:
    """Fit the pair filter with balanced logistic loss; returns loss history."""
    cache = []
    total_pos = 0
    for scene in scenes:
        pairs, labels = srf_training_labels(scene, tcfg.match_iou)
        if not pairs:
            continue
        inputs = pair_inputs(scene, embed, pairs)
        pos = np.flatnonzero(labels == 1.0)
        neg = np.flatnonzero(labels == 0.0)
        total_pos += pos.size
        cache.append((inputs, labels, pos, neg))
    if total_pos == 0:
        raise ValueError("relation filter training found no positive pairs in the corpus")

    params = init_srf_params(dims, np.random.default_rng([tcfg.seed, 2]))
    opt = SgdMomentum(params.tensors(), lr=tcfg.lr, momentum=tcfg.momentum)
    history = []
    for epoch in range(1, tcfg.epochs + 1):
        opt.set_epoch(epoch)
        total, steps = 0.0, 0
        for idx, (inputs, labels, pos, neg) in enumerate(cache):
            if pos.size == 0:
                continue
            rng = np.random.default_rng([tcfg.seed, 3, epoch, idx])
            take = min(neg.size, int(tcfg.negative_ratio * pos.size))
            sel = np.concatenate([pos, np.sort(rng.choice(neg, size=take, replace=False))]) \
                if take else pos
            loss = srf_loss(inputs[sel], labels[sel], params)
            backward(loss)
            opt.step()
            total += loss.item()
            steps += 1
        history.append(total / max(steps, 1))
    return params, history


# ---------------------------------------------------------------------------
# stage 2: full model


@dataclass(eq=False)
class _Prepared:
    scene: SceneRecord
    edges: list[tuple[int, int]]
    feats: np.ndarray
    e_lang: np.ndarray
    masks: np.ndarray
    visual: np.ndarray
    obj_targets: np.ndarray
    rel_targets: np.ndarray
    pos: np.ndarray
    neg: np.ndarray


def _object_targets(scene: SceneRecord, match_iou: float) -> np.ndarray:
    """Best-overlap gt class above the threshold, else background (ties keep
    the lowest gt index)."""
    targets = np.zeros(scene.n_proposals, dtype=np.intp)
    for k, p in enumerate(scene.proposals):
        best, best_iou = 0, match_iou
        for g in scene.gt_objects:
            v = iou(p.box, g.box)
            # strictly greater, so exact ties keep the lowest gt index
            if v > best_iou:
                best, best_iou = g.cls, v
        targets[k] = best
    return targets


def _relation_targets(scene: SceneRecord, edges, dims: Dims,
                      match_iou: float) -> np.ndarray:
    overlap = np.array([[iou(p.box, g.box) > match_iou for g in scene.gt_objects]
                        for p in scene.proposals]) if scene.gt_objects else \
        np.zeros((scene.n_proposals, 0), dtype=bool)
    targets = np.full(len(edges), dims.no_relation, dtype=np.intp)
    for k, (i, j) in enumerate(edges):
        for t in scene.gt_triplets:
            if overlap[i, t.sub] and overlap[j, t.obj]:
                if t.pred >= dims.n_predicates:
                    raise ValueError(f"{scene.id}: predicate {t.pred} out of range for "
                                     f"{dims.n_predicates} predicates")
                targets[k] = t.pred
                break
    return targets


def prepare_scene(scene: SceneRecord, params: ModelParams, config: ModelConfig,
                  match_iou: float) -> _Prepared | None:
    if scene.n_proposals == 0:
        return None
    dims = config.dims
    edges = ordered_pairs(scene.n_proposals)
    feats = np.stack([p.feature for p in scene.proposals])
    dists = np.stack([p.label_dist for p in scene.proposals])
    if feats.shape[1] != dims.d_obj or dists.shape[1] != dims.n_classes:
        raise ValueError(f"{scene.id}: feature or label_dist length does not match dims")
    masks = np.stack([rasterize_mask(scene.proposals[i].box, scene.proposals[j].box,
                                     dims.mask_res) for i, j in edges]) \
        if edges else np.zeros((0, 2, dims.mask_res, dims.mask_res))
    visual = np.stack([union_visual(scene, i, j, dims.d_union) for i, j in edges]) \
        if edges else np.zeros((0, dims.d_union))
    rel_targets = _relation_targets(scene, edges, dims, match_iou)
    return _Prepared(scene=scene, edges=edges, feats=feats,
                     e_lang=params.embed.embed(dists), masks=masks, visual=visual,
                     obj_targets=_object_targets(scene, match_iou),
                     rel_targets=rel_targets,
                     pos=np.flatnonzero(rel_targets != dims.no_relation),
                     neg=np.flatnonzero(rel_targets == dims.no_relation))


def scene_loss(prep: _Prepared, params: ModelParams, config: ModelConfig,
               rel_rows: np.ndarray) -> Tensor:
    """Object cross-entropy plus relation cross-entropy on the selected rows."""
    dims = config.dims
    if prep.edges:
        spatial = spatial_features(prep.masks, params.relfeat)
        x_rel = fuse_relation_features(prep.visual, spatial, params.relfeat)
    else:
        x_rel = Tensor(np.zeros((0, dims.d_rel)))
    g = build_message_graph(Tensor(prep.feats), Tensor(prep.e_lang), x_rel, prep.edges,
                            prep.scene.n_proposals)
    g = run_message_passing(g, params.ttst, config)
    logits = object_logits(g.x_obj, params.head)
    loss = cross_entropy_with_softmax(logits, prep.obj_targets)
    if rel_rows.size:
        rel_logits = relation_logits(g.x_rel, softmax(logits), prep.edges, params.head,
                                     config)
        loss = add(loss, cross_entropy_with_softmax(gather_rows(rel_logits, rel_rows),
                                                    prep.rel_targets[rel_rows]))
    return loss


def train_main(scenes: list[SceneRecord], config: ModelConfig, tcfg: TrainConfig,
               srf: SrfParams | None = None, embed: EmbeddingTable | None = None,
               ) -> tuple[ModelParams, list[float]]:
    """Train everything except the (frozen) relation filter; returns per-epoch
    mean losses."""
    if config.use_srf and srf is None:
        raise ValueError("use_srf is enabled: pass the trained filter (or disable it)")
    params = init_model_params(config, tcfg.seed, srf=srf, embed=embed)
    prepared = [p for p in (prepare_scene(s, params, config, tcfg.match_iou)
                            for s in scenes) if p is not None]
    if not prepared:
        raise ValueError("no trainable scenes (all empty)")
    if not any(p.edges for p in prepared):
        raise ValueError("the filter retained no pairs in any scene; nothing to train on")

    opt = SgdMomentum(params.trainable(), lr=tcfg.lr, momentum=tcfg.momentum)
    history = []
    for epoch in range(1, tcfg.epochs + 1):
        opt.set_epoch(epoch)
        total = 0.0
        for idx, prep in enumerate(prepared):
            rng = np.random.default_rng([tcfg.seed, 4, epoch, idx])
            take = min(prep.neg.size, int(tcfg.negative_ratio * prep.pos.size))
            rows = np.concatenate([prep.pos, np.sort(rng.choice(prep.neg, size=take,
                                                                replace=False))]) \
                if take else prep.pos
            loss = scene_loss(prep, params, config, rows)
            backward(loss)
            opt.step()
            total += loss.item()
        history.append(total / len(prepared))
    return params, history
