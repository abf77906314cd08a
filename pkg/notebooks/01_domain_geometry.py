# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Domain geometry
#
# The switching domain is the set of value vectors from which no switch is
# strictly profitable.  This script checks when it is nonempty, lists the
# slice vertices and compares the three built-in 3-mode examples.

# %%
import numpy as np

from oblique_switch import (analyze_chain, controlled_costs_counterexample, emit_slice_polygon, example1,
                            example2, example3, membership, nonemptiness_report, slice_vertices)

np.set_printoptions(precision=4, suppress=True)

# %% [markdown]
# ## Uncontrolled chain
#
# Example 2 jumps uniformly to one of the other modes at unit cost.  The
# invariant measure is uniform and every excursion costs two on average.

# %%
m2 = example2()
a = analyze_chain(m2.P[0], m2.cbar[0])
print("mu =", a.mu)
print("C =\n", a.C)
print("mean cost =", a.mean_cost)
print("slice vertices:\n", slice_vertices(m2))

# %% [markdown]
# ## A controlled model with an empty domain
#
# Each pair of modes can be connected cheaply, yet the cheapest costs average
# to a negative number, so no point satisfies every constraint.

# %%
rep = nonemptiness_report(controlled_costs_counterexample())
print("verdict:", rep.verdict)
print("min pair sum of Chat:", rep.chat_pair_min)
print("mu*chat:", rep.mu_chat)

# %% [markdown]
# ## Slice polygons
#
# Example 3 mixes the two deterministic moves of Example 1.  Mixing lowers
# the expected cost, which adds constraints, so its region sits inside
# Example 1's hexagon and not the other way round.

# %%
polys = {"example1": emit_slice_polygon(example1()),
         "example2": emit_slice_polygon(example2()),
         "example3": emit_slice_polygon(example3(), resolution=72)}
for name, pts in polys.items():
    print(f"{name}: {len(pts)} boundary points")
print("Example 1 vertices:\n", polys["example1"])
inside = [membership(y, example3(), tol=1e-8)[0] for y in polys["example1"]]
print("Example 1 vertices inside Example 3:", inside)
print("Example 3 points inside Example 1:",
      all(membership(y, example1(), tol=1e-8)[0] for y in polys["example3"]))
