"""Full pipeline assembly: parameters, candidate pairs, one-scene forward.

The forward pass for one scene is: select candidate pairs (relation filter
or confidence fallback), build initial relation features, run message
passing, then classify objects and relations.  Modes differ only in what
the caller substitutes into the scene (gt boxes, one-hot labels) and in
whether the relation filter is bypassed; predicate-classification mode
(``predcls``) bypasses the filter by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, softmax
from .config import Dims, ModelConfig
from .filter import SrfParams, confidence_fallback, init_srf_params, ordered_pairs, \
    pair_inputs, prune_graph, score_pairs
from .inference import HeadParams, PredictedGraph, init_head_params, object_logits, \
    relation_logits, score_triplets
from .message_passing import TtstParams, build_message_graph, init_ttst_params, \
    run_message_passing
from .relation_features import RelFeatParams, init_relfeat_params, relation_features
from .scenes import EmbeddingTable, SceneRecord, one_hot


@dataclass
class ModelParams:
    """Every weight group of one model instance; the embedding table and the
    (separately trained) relation filter ride along for checkpointing."""

    relfeat: RelFeatParams
    ttst: TtstParams
    head: HeadParams
    embed: EmbeddingTable
    srf: SrfParams | None = None

    def trainable(self) -> list[Tensor]:
        """Main-stage parameters; the relation filter stays frozen here."""
        return self.relfeat.tensors() + self.ttst.tensors() + self.head.tensors()

    def named_tensors(self) -> dict[str, Tensor]:
        out = self.relfeat.named("relfeat")
        out.update(self.ttst.named("mp"))
        out.update(self.head.named("head"))
        if self.srf is not None:
            out.update(self.srf.named("srf"))
        return out

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {name: t.data for name, t in self.named_tensors().items()}
        out["embed.table"] = self.embed.matrix
        return out


def init_model_params(config: ModelConfig, seed: int,
                      srf: SrfParams | None = None,
                      embed: EmbeddingTable | None = None) -> ModelParams:
    """Seeded initialization; draw order is fixed so identical seeds give
    identical parameters."""
    dims = config.dims
    rng = np.random.default_rng([int(seed), 0xA11])
    params = ModelParams(
        relfeat=init_relfeat_params(dims, rng),
        ttst=init_ttst_params(dims, rng, use_language=config.use_language),
        head=init_head_params(dims, rng, use_prede=config.use_prede),
        embed=embed if embed is not None
        else EmbeddingTable.seeded(dims.n_classes, dims.d_emb, seed),
        srf=srf,
    )
    if params.embed.matrix.shape != (dims.n_classes, dims.d_emb):
        raise ValueError(
            f"embedding table shape {params.embed.matrix.shape} does not match dims "
            f"({dims.n_classes}, {dims.d_emb})")
    return params


def candidate_pairs(scene: SceneRecord, params: ModelParams, config: ModelConfig,
                    mode: str = "sggen") -> tuple[list[tuple[int, int]], np.ndarray]:
    """Retained ordered pairs plus their selection scores."""
    pairs = ordered_pairs(scene.n_proposals)
    if not pairs:
        return [], np.zeros(0)
    bypass = mode == "predcls" and not config.srf_in_predcls
    if config.use_srf and not bypass:
        if params.srf is None:
            raise ValueError("use_srf is enabled but the model has no filter parameters")
        scores = score_pairs(pair_inputs(scene, params.embed, pairs), params.srf)
        return prune_graph(pairs, scores, config.srf_top_k, config.srf_threshold)
    dists = np.stack([p.label_dist for p in scene.proposals])
    scores = confidence_fallback(dists, pairs)
    return prune_graph(pairs, scores, config.srf_top_k, 0.0)


@dataclass(eq=False)
class PipelineOutput:
    scene: SceneRecord
    edges: list[tuple[int, int]]
    obj_logits: Tensor  # (n, n_classes)
    p_hat: Tensor       # (n, n_classes)
    rel_logits: Tensor  # (len(edges), n_predicates + 1)
    rel_dist: Tensor


def forward_scene(scene: SceneRecord, params: ModelParams, config: ModelConfig,
                  mode: str = "sggen",
                  edges: list[tuple[int, int]] | None = None) -> PipelineOutput:
    """Run the pipeline on one scene (already converted for gt-box modes).

    In ``predcls`` mode the predicted label distributions are replaced by
    the proposals' one-hot gt classes before the relation head runs.
    """
    dims = config.dims
    n = scene.n_proposals
    feats = np.stack([p.feature for p in scene.proposals]) if n else np.zeros((0, dims.d_obj))
    if n and feats.shape[1] != dims.d_obj:
        raise ValueError(f"{scene.id}: feature length {feats.shape[1]} != d_obj {dims.d_obj}")
    dists = np.stack([p.label_dist for p in scene.proposals]) if n \
        else np.zeros((0, dims.n_classes))
    if n and dists.shape[1] != dims.n_classes:
        raise ValueError(f"{scene.id}: label_dist length {dists.shape[1]} != "
                         f"{dims.n_classes} classes")

    if edges is None:
        edges, _ = candidate_pairs(scene, params, config, mode)
    x_rel = relation_features(scene, edges, params.relfeat, dims)
    g = build_message_graph(Tensor(feats), Tensor(params.embed.embed(dists)), x_rel,
                            edges, n)
    g = run_message_passing(g, params.ttst, config)

    logits = object_logits(g.x_obj, params.head)
    if mode == "predcls":
        rows = []
        for p in scene.proposals:
            if p.gt_class is None:
                raise ValueError(f"{scene.id}: predcls mode needs gt_class on proposals")
            rows.append(one_hot(p.gt_class, dims.n_classes))
        p_hat = Tensor(np.stack(rows) if rows else np.zeros((0, dims.n_classes)))
    else:
        p_hat = softmax(logits)
    rel_logits = relation_logits(g.x_rel, p_hat, edges, params.head, config)
    return PipelineOutput(scene=scene, edges=edges, obj_logits=logits, p_hat=p_hat,
                          rel_logits=rel_logits, rel_dist=softmax(rel_logits))


def predict_scene(scene: SceneRecord, params: ModelParams, config: ModelConfig,
                  mode: str = "sggen") -> PredictedGraph:
    out = forward_scene(scene, params, config, mode)
    return score_triplets([p.box for p in scene.proposals], out.p_hat.data, out.edges,
                          out.rel_dist.data)
