"""Training with Byzantine clients on desk-scale logistic regression.

Runs the shipped robustness config (8 clients, 2 of them flipping the sign of
their updates, buffers of 2) with each aggregator and without the attack.
"""

from pathlib import Path

from fedrep.attacks import AttackSpec
from fedrep.config import load_config
from fedrep.protocol import run_experiment
from fedrep.robust_agg import AggregatorSpec

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "robustness.toml")

clean = run_experiment(cfg.replace(attack=AttackSpec(), aggregator=AggregatorSpec(kind="mean")))
print(f"no attack, mean:      final accuracy {clean[-1].accuracy:.4f}")
for kind in ("mean", "geomed", "tmean", "cclip"):
    recs = run_experiment(cfg.replace(aggregator=AggregatorSpec(kind=kind)))
    print(f"bit-flip, {kind:<6}:     final accuracy {recs[-1].accuracy:.4f}")

bits = max(max(r.bits_per_client) for r in clean)
print(f"largest per-client traffic in a round: {bits} bits")
