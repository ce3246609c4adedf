"""Training and using the pair filter that prunes the relationship graph.

Generates a small synthetic corpus, fits the filter, then shows per-pair
scores on a held-out scene next to the ground truth, and how top-k plus the
score threshold shrink the candidate graph.
"""

import numpy as np

from sgg.config import Dims
from sgg.filter import confidence_fallback, ordered_pairs, pair_inputs, \
    prune_graph, score_pairs
from sgg.scenes import EmbeddingTable
from sgg.synthetic import SynthConfig, generate_dataset
from sgg.training import TrainConfig, train_srf

# dropout 0 keeps proposal order aligned with gt order, so the printed
# per-pair comparison below is an exact index match rather than an IoU match
cfg = SynthConfig(num_scenes=90, min_objects=3, max_objects=5,
                  n_object_classes=5, n_predicates=4, feature_noise=0.2,
                  box_jitter=3.0, dropout=0.0, seed=11, d_obj=16)
scenes = generate_dataset(cfg)
train = scenes[:80]
held_out = next(s for s in scenes[80:] if s.n_proposals >= 4)

dims = Dims(n_classes=6, n_predicates=4, d_obj=16, d_emb=8)
embed = EmbeddingTable.seeded(dims.n_classes, dims.d_emb, 0)

params, history = train_srf(train, embed, dims,
                            TrainConfig(epochs=40, lr=0.1, negative_ratio=1.0))
print(f"filter loss: {history[0]:.4f} -> {history[-1]:.4f} "
      f"over {len(history)} epochs")

pairs = ordered_pairs(held_out.n_proposals)
scores = score_pairs(pair_inputs(held_out, embed, pairs), params)
gt_pairs = {(t.sub, t.obj) for t in held_out.gt_triplets}

print(f"\nheld-out scene: {held_out.n_proposals} proposals, "
      f"{len(pairs)} ordered pairs, {len(gt_pairs)} gt relations")
for (i, j), s in sorted(zip(pairs, scores), key=lambda kv: -kv[1]):
    tag = "gt" if (i, j) in gt_pairs else "  "
    print(f"  ({i},{j}) score {s:.3f} {tag}")

kept, kept_scores = prune_graph(pairs, scores, top_k=8, threshold=0.55)
print(f"\nafter prune (top 8, threshold 0.55): {len(kept)} pairs kept, "
      f"{sum(1 for p in kept if p in gt_pairs)}/{len(gt_pairs)} gt retained")

# the fallback ranks pairs by label confidence alone — no learned geometry
dists = np.stack([p.label_dist for p in held_out.proposals])
fb = confidence_fallback(dists, pairs)
top_fb = [p for p, _ in sorted(zip(pairs, fb), key=lambda kv: -kv[1])[:8]]
print(f"confidence fallback keeps {sum(1 for p in top_fb if p in gt_pairs)}"
      f"/{len(gt_pairs)} gt in its top 8")
