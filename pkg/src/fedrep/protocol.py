"""The FedREP round: coordinate agreement, buffered secure summation, robust
aggregation across buffers and the global model step.

One round, in order:

1. every client trains locally and forms ``g_k = u_k + (w - w_k)``;
2. every client proposes ``K/m`` coordinates (Byzantine clients may attack);
3. the server takes the union ``I`` of the well-formed proposals;
4. the server draws a uniform permutation and cuts it into buffers of ``s``;
5. each buffer securely sums its members' values on ``I`` (Byzantine members
   submit attack values, computed after all honest values are fixed);
6. the server robustly aggregates the buffer means;
7. clients keep the untransmitted residual as their new memory;
8. ``w <- w - G``.

Server-side code only ever receives coordinate sets and masked field
vectors, except when quantization is disabled, which is an oracle/debug mode
that hands plaintext values to the server.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .attacks import attack_coords, attack_values
from .client import ClientState, local_momentum_sgd, local_sgd, make_update, update_memory
from .config import ExperimentConfig
from .core import CoordinateSet, SparseUpdate, densify, derive_stream
from .datasets import FederatedData, generate_dataset
from .errors import DivergenceError, ProtocolError
from .models import Model
from .robust_agg import aggregate, buffer_assignment, sequential_mean
from .secure_agg import FieldVector, dequantize_mean, masked_sum, pairwise_masks, quantize
from .sparsify import ConSparParams, extract, propose_coords, top_coords, union_coords, validate_proposal

log = logging.getLogger(__name__)

BITS_PER_NUMBER = 32


@dataclass
class RoundTranscript:
    round: int
    K: int
    proposal_sizes: list[int]
    coords: CoordinateSet
    permutation: np.ndarray
    buffers: list[list[int]]
    buffer_means: list[np.ndarray | None]
    aggregate: SparseUpdate
    dropped: list[tuple[int, str]] = field(default_factory=list)
    eta: float = 0.0
    agg_error_proxy: float = 0.0
    bits_per_client: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        """JSON-ready view used by transcript dumps."""
        return {
            "round": self.round,
            "K": self.K,
            "eta": self.eta,
            "proposal_sizes": self.proposal_sizes,
            "coords": self.coords.indices.tolist(),
            "permutation": self.permutation.tolist(),
            "buffers": self.buffers,
            "buffer_means": [None if b is None else b.tolist() for b in self.buffer_means],
            "aggregate": self.aggregate.values.tolist(),
            "dropped": [list(x) for x in self.dropped],
            "bits_per_client": self.bits_per_client,
        }


@dataclass
class RoundRecord:
    round: int
    loss: float
    accuracy: float | None
    bits_per_client: list[int]
    union_size: int
    agg_error_proxy: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "round": self.round,
                "loss": self.loss,
                "accuracy": self.accuracy,
                "bits_per_client": self.bits_per_client,
                "union_size": self.union_size,
                "agg_error_proxy": self.agg_error_proxy,
            },
            separators=(",", ":"),
        )


@dataclass
class GlobalState:
    w: np.ndarray
    clients: list[ClientState]
    model: Model
    data: FederatedData
    params: ConSparParams
    round: int = 0

    @property
    def d(self) -> int:
        return self.model.dim


class Server:
    """Everything the server sees passes through :meth:`observe`.

    With ``audit=True`` every received object is kept in ``observed`` so tests
    can check that no plaintext client value ever reaches the server.
    """

    def __init__(self, cfg: ExperimentConfig, params: ConSparParams, audit: bool = False):
        self.cfg = cfg
        self.params = params
        self.audit = audit
        self.observed: list = []

    def observe(self, obj):
        if self.audit:
            self.observed.append(obj)
        return obj

    def union(self, proposals: dict[int, object]) -> tuple[CoordinateSet, dict[int, CoordinateSet]]:
        accepted = {}
        for k, raw in proposals.items():
            q = validate_proposal(self.observe(raw), self.params)
            if q is None:
                log.warning("round proposal from client %d dropped", k)
            else:
                accepted[k] = q
        if not accepted:
            return CoordinateSet.empty(self.params.d), accepted
        return union_coords(list(accepted.values())), accepted

    def assign(self, rng):
        return buffer_assignment(self.cfg.m, self.cfg.s, rng)

    def secure_mean(self, submissions: list[FieldVector]) -> np.ndarray:
        for v in submissions:
            if not isinstance(v, FieldVector):
                raise ProtocolError("server accepts only masked field vectors")
            self.observe(v)
        total = masked_sum(submissions)
        return dequantize_mean(total, len(submissions), self.cfg.quant)

    def plain_mean(self, values: list[np.ndarray]) -> np.ndarray:
        for v in values:
            self.observe(v)
        return sequential_mean(values)

    def robust_aggregate(self, means: list[np.ndarray]) -> np.ndarray:
        return aggregate(means, self.cfg.aggregator)


def init_state(cfg: ExperimentConfig) -> GlobalState:
    """Data, model, initial parameters and zeroed client state for ``cfg``."""
    data = generate_dataset(cfg.dataset, cfg.m, derive_stream(cfg.master_seed, 0, "dataset"))
    model = Model(cfg.model, data.features, data.classes)
    d = model.dim
    params = ConSparParams(d, cfg.budget(d), cfg.m, cfg.alpha)
    w = model.init_params(derive_stream(cfg.master_seed, 0, "init"))
    clients = [ClientState(k, shard, d) for k, shard in enumerate(data.shards)]
    return GlobalState(w, clients, model, data, params)


def _map(workers: int, fn: Callable, items: Iterable):
    items = list(items)
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _valid_payload(values, n: int) -> str | None:
    try:
        arr = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError):
        return "non-numeric payload"
    if arr.shape != (n,):
        return f"payload shape {arr.shape}, expected ({n},)"
    if not np.all(np.isfinite(arr)):
        return "non-finite payload"
    return None


def comm_bits(transcript: RoundTranscript, cfg: ExperimentConfig) -> list[int]:
    """Bits each client moves in a round at 32 bits per integer or value.

    Sent: its proposal and its values on ``I``. Received: ``I`` and the
    aggregate on ``I``. Raises :class:`ProtocolError` if any client exceeds
    ``(96 + 32/m) K``.
    """
    n_union = len(transcript.coords)
    bits = [BITS_PER_NUMBER * (size + 3 * n_union) for size in transcript.proposal_sizes]
    bound = comm_bound(cfg.m, transcript.K)
    worst = max(bits, default=0)
    if worst > bound:
        raise ProtocolError(f"client moved {worst} bits, above the bound {bound}")
    return bits


def comm_bound(m: int, K: int) -> int:
    """``(96 + 32/m) K`` in exact integer arithmetic (``K/m`` integral)."""
    return 96 * K + (BITS_PER_NUMBER * K) // m


def run_round(
    state: GlobalState,
    cfg: ExperimentConfig,
    *,
    workers: int | None = None,
    server: Server | None = None,
    payload_hook: Callable[[int, np.ndarray], object] | None = None,
) -> RoundTranscript:
    """Execute one round in place on ``state`` and return its transcript.

    ``payload_hook(k, values)`` lets tests replace the wire payload of
    Byzantine client ``k``.
    """
    workers = cfg.workers if workers is None else workers
    server = server or Server(cfg, state.params)
    t, seed, p, m = state.round, cfg.master_seed, state.params, cfg.m
    byz = set(cfg.byzantine_ids)
    honest_ids = [k for k in range(m) if k not in byz]
    local = cfg.local
    eta = local.eta_at(t)
    w = state.w

    def train(k: int) -> np.ndarray:
        st = state.clients[k]
        rng = derive_stream(seed, t, f"client:{k}:train")
        if local.algo == "sgd":
            w_k = local_sgd(w, st.shard, eta, local.interval, rng, state.model, local.batch_size)
        else:
            w_k = local_momentum_sgd(
                st, w, eta, local.interval, local.beta, rng, state.model, local.batch_size
            )
        return make_update(st, w, w_k)

    updates = _map(workers, train, range(m))
    for k in honest_ids:
        if not np.all(np.isfinite(updates[k])):
            raise DivergenceError(f"round {t}: local update of client {k} became non-finite")

    def honest_proposal(k: int) -> CoordinateSet:
        rng = derive_stream(seed, t, f"client:{k}:coords")
        return propose_coords(top_coords(updates[k], p.per_client), p, rng)

    proposals: dict[int, object] = {k: honest_proposal(k) for k in honest_ids}
    for k in sorted(byz):
        if cfg.attack.coords == "honest":
            proposals[k] = honest_proposal(k)
        else:
            rng = derive_stream(seed, t, f"client:{k}:coords")
            honest_props = {h: proposals[h] for h in honest_ids}
            proposals[k] = attack_coords(
                cfg.attack.coords, updates[k], p, honest_props, rng, cfg.attack.same_target
            )
    coords, accepted = server.union(dict(sorted(proposals.items())))
    proposal_sizes = [len(accepted[k]) if k in accepted else 0 for k in range(m)]

    perm, buffers = server.assign(derive_stream(seed, t, "server"))

    values = {k: extract(updates[k], coords).values for k in range(m)}
    honest_values = [values[h] for h in honest_ids]
    payloads: dict[int, object] = {k: values[k] for k in honest_ids}
    for k in sorted(byz):
        payloads[k] = attack_values(cfg.attack, values[k], honest_values, m, cfg.byz_count)
        if payload_hook is not None:
            payloads[k] = payload_hook(k, payloads[k])

    n_union = len(coords)
    dropped: list[tuple[int, str]] = []
    means: list[np.ndarray | None] = []
    for members in buffers:
        valid = []
        for k in members:
            why = _valid_payload(payloads[k], n_union)
            if why is None:
                valid.append(k)
            else:
                log.warning("round %d: dropped payload of client %d (%s)", t, k, why)
                dropped.append((k, why))
        if not valid:
            means.append(None)
            continue
        if cfg.quant.enabled:

            def submit(k: int, valid=valid) -> FieldVector:
                q = quantize(payloads[k], cfg.quant, derive_stream(seed, t, f"client:{k}:quant"))
                return q + pairwise_masks(valid, k, n_union, t, seed, cfg.quant.modulus)

            means.append(server.secure_mean(_map(workers, submit, valid)))
        else:
            means.append(server.plain_mean([np.asarray(payloads[k], dtype=np.float64) for k in valid]))

    live = [b for b in means if b is not None]
    if not live:
        raise ProtocolError(f"round {t}: every buffer was empty")
    agg = SparseUpdate(coords, server.robust_aggregate(live))

    for k in range(m):
        update_memory(state.clients[k], updates[k], SparseUpdate(coords, values[k]))

    w_next = w - densify(agg, state.d)
    if not np.all(np.isfinite(w_next)):
        raise DivergenceError(f"round {t}: model parameters became non-finite")
    state.w = w_next
    state.round = t + 1

    err = agg.values - sequential_mean(honest_values) if n_union else np.zeros(0)
    transcript = RoundTranscript(
        round=t,
        K=p.K,
        proposal_sizes=proposal_sizes,
        coords=coords,
        permutation=perm,
        buffers=buffers,
        buffer_means=means,
        aggregate=agg,
        dropped=dropped,
        eta=eta,
        agg_error_proxy=float(np.linalg.norm(err)),
    )
    transcript.bits_per_client = comm_bits(transcript, cfg)
    return transcript


def evaluate(state: GlobalState) -> tuple[float, float | None]:
    """Loss and accuracy of the global model on the held-out split."""
    batch = state.data.test.batch
    loss, _ = state.model.loss_and_grad(state.w, batch)
    return loss, state.model.accuracy(state.w, batch)


def run_experiment(
    cfg: ExperimentConfig,
    *,
    workers: int | None = None,
    on_record: Callable[[RoundRecord], None] | None = None,
    on_transcript: Callable[[RoundTranscript], None] | None = None,
    state: GlobalState | None = None,
) -> list[RoundRecord]:
    """Run ``cfg.rounds`` rounds, evaluating the global model after each."""
    state = state or init_state(cfg)
    loss0, acc0 = evaluate(state)
    log.info("initial evaluation: loss=%.6g accuracy=%s", loss0, acc0)
    records = []
    for _ in range(cfg.rounds):
        tr = run_round(state, cfg, workers=workers)
        loss, acc = evaluate(state)
        rec = RoundRecord(tr.round, loss, acc, tr.bits_per_client, len(tr.coords), tr.agg_error_proxy)
        records.append(rec)
        if on_transcript is not None:
            on_transcript(tr)
        if on_record is not None:
            on_record(rec)
    return records
