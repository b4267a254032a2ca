"""Empirical robustness constants of the aggregators.

For a Byzantine fraction delta, the certifier plants attackers of growing
magnitude among Gaussian honest inputs and reports the worst ratio of squared
error to delta times the honest spread.
"""

from fedrep.core import derive_stream
from fedrep.robust_agg import AggregatorSpec, certify_robustness

for kind, iters in (("mean", None), ("geomed", 200), ("tmean", None), ("cclip", None)):
    spec = AggregatorSpec(kind=kind, geomed_iters=iters) if iters else AggregatorSpec(kind=kind)
    est = certify_robustness(spec, 0.25, 100, derive_stream(0, 0, "certify"))
    print(f"{kind:<7} c = {est.c:10.3g}  (worst attack: {est.worst_attack})")
