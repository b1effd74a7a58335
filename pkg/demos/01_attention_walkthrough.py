"""Walk through one bi-level attention layer on the six-node fixture.

Node-level weights (gamma) mix a node's neighbors within each relation into a
summary z.  Relation-level weights (psi) then mix those summaries across the
node's relations.
"""

import numpy as np

from bagnn import tensor as T
from bagnn.attention import layer_forward, project_features
from bagnn.model import ModelConfig, init_params
from bagnn.synthetic import six_node_fixture

np.set_printoptions(precision=4, suppress=True)

g, split = six_node_fixture()
print(f"{g.node_count} nodes, {g.num_base_relations} base relations, {g.num_edges} edges (inverses included)")

params = init_params(ModelConfig(num_layers=1, hidden_dim=4, heads=2, num_classes=2), g)
with T.no_grad():
    h0 = project_features(params.embedding, g.entity_type_of, params.type_proj)
    h1, record = layer_forward(g, h0, params.layers[0])

v = 0
rels = g.relation_set(v)
print(f"\nnode {v} has relations {[g.relation_name(r) for r in rels]}")

# node level: one distribution per relation, over that relation's neighbors
for r in rels:
    print(f"  gamma[{g.relation_name(r)}] over neighbors {g.neighbors(v, r)}: {record.gamma_for(0, r, v)}")

# relation level: a row-stochastic |R_v| x |R_v| matrix per head
psi = record.psi_matrix(0, v)
print("\npsi (head 0), rows sum to one:")
print(psi)
print("row sums:", psi.sum(axis=1))

# node 5 has no edges: only the self term and the skip connection remain
print("\nisolated node 5:", h1.data[5])
