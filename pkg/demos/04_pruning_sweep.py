"""Keep the top, bottom or a random share of relations and retrain.

Relations are ranked by the psi-derived importance of a model trained on the
full graph.  Inverse relations are kept or dropped together with their base.
"""

import statistics

from bagnn import tensor as T
from bagnn.eval import PruneSpec, accuracy, prune_relations, relation_importance
from bagnn.model import ModelConfig, forward
from bagnn.synthetic import planted_relation_graph
from bagnn.train import TrainConfig, predict_classes, train_node_classification

fractions = (0.1, 0.3, 0.5)
modes = ("top", "random", "bottom")
table = {(m, f): [] for m in modes for f in fractions}

for seed in range(3):
    g, split, _ = planted_relation_graph(seed)
    cfg = ModelConfig(hidden_dim=16, heads=2, num_classes=split.num_classes, seed=seed)
    tc = TrainConfig(epochs=50)
    params, _ = train_node_classification(g, split, cfg, tc)
    with T.no_grad():
        _, records = forward(g, params)
    importance = relation_importance(records[-1], g.num_relations)
    for mode in modes:
        for f in fractions:
            sub = prune_relations(g, importance, PruneSpec(mode, f, seed))
            p, _ = train_node_classification(sub, split, cfg, tc)
            table[mode, f].append(accuracy(predict_classes(sub, p), split.test))

print("median test accuracy over 3 seeds")
print("fraction " + "".join(f"{m:>9}" for m in modes))
for f in fractions:
    print(f"{f:8.1f} " + "".join(f"{statistics.median(table[m, f]):9.3f}" for m in modes))
