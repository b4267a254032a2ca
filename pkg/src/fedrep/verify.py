"""Numerical checks of the analytical guarantees of consensus sparsification.

These back the ``verify-dp`` and ``verify-contraction`` commands and the
acceptance suite. The DP check works on the exact output distribution of the
proposal mechanism, enumerated with rational arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .core import RngStream
from .sparsify import (
    ConSparParams,
    contraction_constant,
    dp_epsilon,
    extract,
    propose_coords,
    top_coords,
    union_coords,
)
from .core import densify


def proposal_distribution(top, d: int, alpha) -> dict[tuple[int, ...], Fraction]:
    """Exact law of the proposal for top set ``top`` by walking every branch:
    the Binomial count, the kept subset and the random replacements."""
    top = tuple(sorted(top))
    k = len(top)
    a = Fraction(alpha)
    out: dict[tuple[int, ...], Fraction] = {}
    for r in range(k + 1):
        p_r = math.comb(k, r) * a**r * (1 - a) ** (k - r)
        if p_r == 0:
            continue
        p_keep = Fraction(1, math.comb(k, k - r))
        for kept in combinations(top, k - r):
            rest = [j for j in range(d) if j not in kept]
            p_extra = Fraction(1, math.comb(len(rest), r))
            for extra in combinations(rest, r):
                out_set = tuple(sorted(kept + extra))
                out[out_set] = out.get(out_set, Fraction(0)) + p_r * p_keep * p_extra
    return out


def closed_form_probability(d: int, k: int, alpha: float, overlap: int) -> float:
    """``Pr[M(T) = I]`` when ``|T & I| = overlap``, by the summation formula."""
    a = alpha
    total = 0.0
    for i in range(overlap + 1):
        total += ((1 - a) / a) ** i * math.comb(overlap, i) / math.comb(d - i, d - k)
    return a**k * total


@dataclass
class DPCheck:
    d: int
    k: int
    alpha: float
    max_ratio: float
    bound: float
    epsilon: float

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.bound


def max_likelihood_ratio(d: int, k: int, alpha) -> Fraction:
    """Largest ``Pr[M(T1)=I] / Pr[M(T2)=I]`` over adjacent ``T1, T2`` and all ``I``."""
    tops = list(combinations(range(d), k))
    laws = {t: proposal_distribution(t, d, alpha) for t in tops}
    worst = Fraction(0)
    for t1 in tops:
        for t2 in tops:
            if len(set(t1) & set(t2)) != k - 1:
                continue
            l2 = laws[t2]
            for out_set, p1 in laws[t1].items():
                p2 = l2.get(out_set, 0)
                if p2 and p1 / p2 > worst:
                    worst = p1 / p2
    return worst


def verify_dp(d: int, k: int, alpha: float) -> DPCheck:
    eps = dp_epsilon(ConSparParams(d=d, K=k, m=1, alpha=alpha))
    ratio = max_likelihood_ratio(d, k, Fraction(alpha).limit_denominator(10**9))
    return DPCheck(d, k, alpha, float(ratio), math.exp(eps), eps)


@dataclass
class ContractionCheck:
    mean: float
    se: float
    bound: float
    d_cons: float
    trials: int

    @property
    def ok(self) -> bool:
        return self.mean <= self.bound + 3.0 * self.se


def verify_contraction(
    d: int, K: int, m: int, alpha: float, delta: float, trials: int, rng: RngStream
) -> ContractionCheck:
    """Monte Carlo of ``||g - C(g)||^2 / ||g||^2`` with ``m`` honest Gaussian clients.

    Each trial draws ``m`` independent standard-normal vectors, runs the
    proposal mechanism on each and sparsifies every vector on the union. The
    per-trial sample is the average ratio over clients.
    """
    p = ConSparParams(d=d, K=K, m=m, alpha=alpha)
    samples = np.empty(trials)
    for t in range(trials):
        gs = rng.normal(size=(m, d))
        props = [propose_coords(top_coords(g, p.per_client), p, rng) for g in gs]
        coords = union_coords(props)
        ratios = []
        for g in gs:
            resid = g - densify(extract(g, coords), d)
            ratios.append(float(resid @ resid) / float(g @ g))
        samples[t] = np.mean(ratios)
    d_cons = contraction_constant(p, delta)
    se = float(samples.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return ContractionCheck(float(samples.mean()), se, 1.0 - d_cons / d, d_cons, trials)
