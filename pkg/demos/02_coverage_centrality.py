# %% [markdown]
# # Coverage centrality
#
# ``c(v)`` counts how often a node appears across all instances of the
# chosen meta-paths; ``c_plus(v)`` sums ``c`` over direct neighbors.  Both
# are turned into one-hot codes before entering the model.

# %%
import numpy as np

from shgnn.centrality import centrality_onehots, count_coverage, histogram_summary
from shgnn.synth import random_hetero_graph

ds = random_hetero_graph(0)
g = ds.graph
table = count_coverage(g, ["M-A-M", "M-D-M"])
for v in range(6):
    print(f"{g.node_names[v]:>4}  c={table.c[v]:3d}  c+={table.c_plus[v]:3d}")

# %% [markdown]
# Large counts share the last one-hot slot (clamp) unless log buckets are used.

# %%
z_clamp = centrality_onehots(table, 8)
z_log = centrality_onehots(table, 8, mode="log")
print("distinct clamp codes:", len(np.unique(z_clamp.argmax(axis=1))))
print("distinct log codes:  ", len(np.unique(z_log.argmax(axis=1))))

# %%
for t, s in histogram_summary(g, table).items():
    print(t, s["c"])
