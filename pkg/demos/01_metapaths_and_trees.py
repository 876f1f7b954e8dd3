# %% [markdown]
# # Meta-path instances and aggregation trees
#
# Two movies that share an actor, then a movie that is reached through two
# different actors.  We list the instances ending at one target and show
# how they fold into a prefix tree.

# %%
from shgnn.metapath import build_tree, enumerate_instances, metapath_neighbors, tree_rows
from shgnn.synth import g0, shared_actor_graph

g = g0()
m2 = g.index["m2"]
for inst in enumerate_instances(g, "M-A-M", m2):
    print(" -> ".join(g.node_names[v] for v in inst))

# %% [markdown]
# Neighbors form a multiset: ``m2`` reaches itself through ``a1``.

# %%
print([g.node_names[v] for v in metapath_neighbors(g, "M-A-M", m2)])

# %% [markdown]
# Instances sharing a prefix (counted from the target) share tree nodes.
# Here ``m1`` and ``m2`` hang under the same ``a1`` node.

# %%
g = shared_actor_graph()
tree = build_tree(g, "M-A-M", g.index["mi"])
for depth, i, parent, node in tree_rows(tree, g.node_names):
    print("  " * depth + f"{node} (parent slot {parent})")
print("leaves under the root:", tree.leaf_counts()[0])
