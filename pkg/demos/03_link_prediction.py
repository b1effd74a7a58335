"""Link prediction on a small KG whose only signal is group membership.

A trained encoder plus DistMult is compared with a control that trains the
same decoder on top of the frozen, untrained encoder.
"""

from bagnn import tensor as T
from bagnn.eval import mrr_hits, rank_all
from bagnn.model import ModelConfig, forward, init_params
from bagnn.synthetic import toy_kg
from bagnn.train import TrainConfig, train_link_prediction

kg = toy_kg(seed=0)
g = kg.train_graph()
print(f"{kg.num_entities} entities, {len(kg.train)} train / {len(kg.valid)} valid / {len(kg.test)} test triples")

cfg = ModelConfig(hidden_dim=16, heads=2, decoder="distmult", seed=0)
tc = TrainConfig(epochs=300)


def metrics(params):
    with T.no_grad():
        h, _ = forward(g, params)
    return mrr_hits(rank_all(h.data, params.decoder.data, "distmult", kg))


trained, report = train_link_prediction(g, kg, cfg, tc)
print(f"mean score: positives {report.final('mean_positive_score'):.2f}, "
      f"negatives {report.final('mean_negative_score'):.2f}")

control = init_params(cfg, g, num_decoder_relations=kg.num_relations)
control, _ = train_link_prediction(g, kg, cfg, tc, params=control, freeze=control.encoder_tensors())

for name, p in (("trained", trained), ("control", control)):
    m = metrics(p)
    print(f"{name:>8}: raw MRR {m['raw']['MRR']:.3f}  filtered MRR {m['filtered']['MRR']:.3f}  "
          f"filtered Hits@1 {m['filtered']['Hits@1']:.3f}")
