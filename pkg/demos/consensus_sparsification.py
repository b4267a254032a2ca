"""Consensus sparsification: proposals, their union, privacy and contraction.

Each client proposes K/m coordinates: its top-k set with every entry swapped
for a uniformly random outside coordinate with probability alpha. The server
broadcasts the union, and every client exchanges values only on that union.
"""

import numpy as np

from fedrep.core import densify, derive_stream
from fedrep.sparsify import (
    ConSparParams,
    contraction_constant,
    dp_epsilon,
    extract,
    propose_coords,
    top_coords,
    union_coords,
)
from fedrep.verify import verify_dp

p = ConSparParams(d=20, K=8, m=4, alpha=0.5)
rng = derive_stream(0, 0, "demo")
grads = np.random.default_rng(0).normal(size=(p.m, p.d))

proposals = []
for k, g in enumerate(grads):
    top = top_coords(g, p.per_client)
    prop = propose_coords(top, p, rng)
    proposals.append(prop)
    print(f"client {k}: top {top.as_tuple()} -> proposes {prop.as_tuple()}")

coords = union_coords(proposals)
print(f"broadcast union ({len(coords)} of {p.d}): {coords.as_tuple()}")

g = grads[0]
resid = g - densify(extract(g, coords), p.d)
print(f"client 0 keeps {1 - resid @ resid / (g @ g):.1%} of its squared norm")
print(f"contraction bound: at least {contraction_constant(p, 0.0) / p.d:.1%} kept in expectation")

print(f"privacy level of one proposal: epsilon = {dp_epsilon(p):.3f}")
for d, k, a in [(6, 2, 0.5), (4, 1, 0.3)]:
    res = verify_dp(d, k, a)
    verdict = "holds" if res.ok else "does NOT hold"
    print(f"exhaustive check d={d} K/m={k} alpha={a}: max ratio {res.max_ratio:.3f} vs e^eps {res.bound:.3f} ({verdict})")
