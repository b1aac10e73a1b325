"""Self-labeling ensemble policy for DT placement.

K sibling networks share one feature extractor and each proposes a complete
placement for a scenario.  The proposals are scored with the cost model, the
cheapest one becomes the training label for that scenario, and the pair is
pushed into a bounded FIFO replay database.  Once the database is full, every
iteration also draws K independent minibatches: each network trains on its
own batch, while the shared extractor takes a single step on the average of
the K gradients flowing back through it.  No externally labeled data is
involved at any point; the ensemble bootstraps from its own best guesses.

Placements are emitted as bits: each DT gets ``ceil(log2(R))`` sigmoid
outputs, thresholded at 0.5 and read as a big-endian code modulo the server
count R.  Labels are the plain binary expansion of the chosen server index.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from math import ceil, log2

import numpy as np

from .cost_model import Decision, evaluate
from .errors import ContractError, InvalidConfigError, SlotCapacityError
from .exact import SchemeResult
from .neural import (
    Activation,
    AdamHyper,
    MlpArch,
    MlpModel,
    init_random,
    load_state,
    model_meta,
    model_state,
)
from .scenario import GeneratorConfig, Scenario, generate_random

ENSEMBLE_FORMAT = "dtplace-ensemble"
ENSEMBLE_VERSION = 1

_FEATURES_PER_DEVICE = 4  # workload, x, y, bandwidth


@dataclass(frozen=True)
class FeatureConfig:
    """Fixed-width encoding of one DT's member devices.

    Each DT is flattened into ``slots`` rows of (workload, x, y, bandwidth),
    members first in a canonical order, zero rows after.  Scales bring every
    entry near [0, 1]; the bandwidth column doubles as an occupancy flag
    because real devices always have positive bandwidth.  ``slots`` bounds
    the devices one DT may own, so it is sized with slack over the expected
    maximum occupancy (24 covers 120 devices over 15 DTs with room to spare).

    ``head_activation`` sets the extractor's last layer: identity passes
    unbounded embeddings through, sigmoid squashes them into (0, 1).  The
    identity default keeps embeddings informative once training drives the
    extractor far from initialization; a squashed head can saturate there,
    leaving the decision networks blind to the scenario.
    """

    slots: int = 24
    embedding_sizes: tuple[int, ...] = (32, 8)
    head_activation: Activation = Activation.IDENTITY
    workload_scale: float = 320.0
    coord_scale: tuple[float, float] = (1000.0, 800.0)
    bandwidth_scale: float = 1000.0

    def __post_init__(self):
        if self.slots < 1:
            raise InvalidConfigError("slots must be at least 1")
        if not self.embedding_sizes or any(n < 1 for n in self.embedding_sizes):
            raise InvalidConfigError("embedding_sizes must be positive")
        if self.head_activation not in (Activation.IDENTITY, Activation.SIGMOID):
            raise InvalidConfigError("head_activation must be identity or sigmoid")
        for name in ("workload_scale", "bandwidth_scale"):
            if getattr(self, name) <= 0:
                raise InvalidConfigError(f"{name} must be positive")
        if self.coord_scale[0] <= 0 or self.coord_scale[1] <= 0:
            raise InvalidConfigError("coord_scale must be positive")

    @property
    def input_width(self) -> int:
        return self.slots * _FEATURES_PER_DEVICE

    @property
    def embedding_width(self) -> int:
        return self.embedding_sizes[-1]


def raw_group_input(s: Scenario, config: FeatureConfig) -> np.ndarray:
    """Per-DT raw feature rows, shape ``(num_dts, input_width)``.

    Members are sorted by (workload, x, y) so the encoding does not depend
    on device enumeration order.
    """
    out = np.zeros((s.num_dts, config.input_width))
    dev = s.devices
    members: list[list[int]] = [[] for _ in range(s.num_dts)]
    for i, dt in enumerate(dev.ownership):
        members[dt].append(i)
    for dt, idx in enumerate(members):
        if len(idx) > config.slots:
            raise SlotCapacityError(
                f"DT {dt} owns {len(idx)} devices but the encoding has "
                f"{config.slots} slots"
            )
        idx.sort(key=lambda i: (dev.workloads[i], dev.locations[i][0], dev.locations[i][1]))
        for slot, i in enumerate(idx):
            x, y = dev.locations[i]
            base = slot * _FEATURES_PER_DEVICE
            out[dt, base] = dev.workloads[i] / config.workload_scale
            out[dt, base + 1] = x / config.coord_scale[0]
            out[dt, base + 2] = y / config.coord_scale[1]
            out[dt, base + 3] = dev.bandwidths[i] / config.bandwidth_scale
    return out


def bits_per_dt(num_servers: int) -> int:
    if num_servers < 1:
        raise ContractError("num_servers must be at least 1")
    return max(1, ceil(log2(num_servers)))


def decode_codes(outputs: np.ndarray, num_dts: int, num_servers: int) -> np.ndarray:
    """Threshold sigmoid outputs into server indices, shape ``(batch, num_dts)``.

    Each DT's bits read as a big-endian integer; values past the server count
    wrap via modulo, so every bit pattern decodes to a valid placement.
    """
    bits = bits_per_dt(num_servers)
    out = np.asarray(outputs)
    if out.ndim == 1:
        out = out[None, :]
    if out.shape[1] != num_dts * bits:
        raise ContractError(
            f"expected {num_dts * bits} outputs for {num_dts} DTs, got {out.shape[1]}"
        )
    raised = (out.reshape(out.shape[0], num_dts, bits) > 0.5).astype(np.int64)
    weights = 1 << np.arange(bits - 1, -1, -1, dtype=np.int64)
    return (raised @ weights) % num_servers


def decode_decision(outputs: np.ndarray, num_dts: int, num_servers: int) -> Decision:
    codes = decode_codes(outputs, num_dts, num_servers)[0]
    return Decision(tuple(int(c) for c in codes))


def encode_decision(d: Decision, num_servers: int) -> np.ndarray:
    """Target bit vector whose decode is ``d`` (plain binary expansion)."""
    bits = bits_per_dt(num_servers)
    target = np.zeros(len(d.assignment) * bits)
    for m, server in enumerate(d.assignment):
        if not 0 <= server < num_servers:
            raise ContractError(f"server index {server} out of range at DT {m}")
        for j in range(bits):
            target[m * bits + j] = float((server >> (bits - 1 - j)) & 1)
    return target


class ReplayDatabase:
    """Bounded FIFO store of (state, target) pairs; inserts evict the oldest."""

    def __init__(self, capacity: int, state_shape: tuple[int, ...], target_width: int):
        if capacity < 1:
            raise ContractError("capacity must be at least 1")
        self._states = np.zeros((capacity, *state_shape))
        self._targets = np.zeros((capacity, target_width))
        self._next = 0
        self._count = 0

    @property
    def capacity(self) -> int:
        return self._states.shape[0]

    def __len__(self) -> int:
        return self._count

    @property
    def full(self) -> bool:
        return self._count == self.capacity

    def insert(self, state: np.ndarray, target: np.ndarray) -> None:
        state = np.asarray(state)
        target = np.asarray(target)
        if state.shape != self._states.shape[1:] or target.shape != self._targets.shape[1:]:
            raise ContractError("entry shape does not match the database")
        self._states[self._next] = state
        self._targets[self._next] = target
        self._next = (self._next + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int):
        """Uniform sample with replacement over the stored entries."""
        if self._count == 0:
            raise ContractError("cannot sample from an empty database")
        idx = rng.integers(0, self._count, size=batch_size)
        return self._states[idx], self._targets[idx]

    def contents(self):
        """Stored (states, targets) in insertion order, oldest first."""
        if self._count < self.capacity:
            order = np.arange(self._count)
        else:
            order = (np.arange(self.capacity) + self._next) % self.capacity
        return self._states[order].copy(), self._targets[order].copy()


@dataclass
class DdlEnsemble:
    """Shared feature extractor plus K sibling placement networks."""

    feature: FeatureConfig
    num_dts: int
    num_servers: int
    extractor: MlpModel
    dnns: list[MlpModel]

    @property
    def num_dnns(self) -> int:
        return len(self.dnns)


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run depends on; two equal configs train equally."""

    iterations: int
    num_dnns: int = 12
    learning_rate: float = 1e-3
    db_capacity: int = 1024
    batch_size: int = 128
    hidden_sizes: tuple[int, ...] = (128, 64)
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    seed: int = 0


def _check_ensemble_config(c: TrainConfig) -> None:
    if c.num_dnns < 1:
        raise InvalidConfigError("num_dnns must be at least 1")
    if c.learning_rate <= 0:
        raise InvalidConfigError("learning_rate must be positive")
    if any(n < 1 for n in c.hidden_sizes):
        raise InvalidConfigError("hidden_sizes must be positive")


def _check_train_config(c: TrainConfig) -> None:
    _check_ensemble_config(c)
    if c.iterations < 1:
        raise InvalidConfigError("iterations must be at least 1")
    if c.db_capacity < 1 or c.batch_size < 1:
        raise InvalidConfigError("db_capacity and batch_size must be at least 1")
    if c.batch_size > c.db_capacity:
        raise InvalidConfigError("batch_size cannot exceed db_capacity")


def build_ensemble(config: TrainConfig) -> DdlEnsemble:
    """Fresh ensemble for the generator's shape.

    Network seeds derive sequentially from ``config.seed``, so ensembles that
    differ only in ``num_dnns`` agree on their common prefix of networks.
    """
    _check_ensemble_config(config)
    gen = config.generator
    m = gen.num_dts
    num_servers = gen.num_edge_servers + 1
    feat = config.feature
    hyper = AdamHyper(learning_rate=config.learning_rate)

    ext_arch = MlpArch(
        sizes=(feat.input_width, *feat.embedding_sizes),
        activations=(Activation.RELU,) * (len(feat.embedding_sizes) - 1)
        + (feat.head_activation,),
    )
    dnn_arch = MlpArch(
        sizes=(m * feat.embedding_width, *config.hidden_sizes, m * bits_per_dt(num_servers)),
        activations=(Activation.RELU,) * len(config.hidden_sizes) + (Activation.SIGMOID,),
    )

    seeds = np.random.default_rng(config.seed)
    extractor = init_random(ext_arch, seed=int(seeds.integers(2 ** 63)), hyper=hyper)
    dnns = [
        init_random(dnn_arch, seed=int(seeds.integers(2 ** 63)), hyper=hyper)
        for _ in range(config.num_dnns)
    ]
    return DdlEnsemble(feat, m, num_servers, extractor, dnns)


def propose_batch(ensemble: DdlEnsemble, raw_batch: np.ndarray) -> np.ndarray:
    """Placements from every network for a batch of raw inputs.

    ``raw_batch`` is ``(batch, num_dts, input_width)``; the result holds
    server indices with shape ``(num_dnns, batch, num_dts)``.
    """
    raw = np.asarray(raw_batch)
    if raw.ndim == 2:
        raw = raw[None, :, :]
    b, m, width = raw.shape
    if m != ensemble.num_dts or width != ensemble.feature.input_width:
        raise ContractError("raw input shape does not match the ensemble")
    emb = ensemble.extractor.forward(raw.reshape(b * m, width)).reshape(b, -1)
    return np.stack([
        decode_codes(dnn.forward(emb), m, ensemble.num_servers)
        for dnn in ensemble.dnns
    ])


@dataclass(frozen=True)
class Proposal:
    decision: Decision
    cost: float
    dnn_index: int


def _choose(ensemble: DdlEnsemble, s: Scenario, raw: np.ndarray) -> Proposal:
    codes = propose_batch(ensemble, raw[None, :, :])[:, 0, :]
    cache: dict[tuple[int, ...], float] = {}
    costs = np.empty(len(codes))
    for k, row in enumerate(codes):
        assignment = tuple(int(c) for c in row)
        if assignment not in cache:
            cache[assignment] = evaluate(s, Decision(assignment)).weighted_cost
        costs[k] = cache[assignment]
    k = int(np.argmin(costs))  # np.argmin keeps the lowest index on ties
    return Proposal(Decision(tuple(int(c) for c in codes[k])), float(costs[k]), k)


def best_of_k(ensemble: DdlEnsemble, s: Scenario) -> Proposal:
    """Cheapest of the K proposed placements, lowest network index on ties."""
    if s.num_dts != ensemble.num_dts or s.num_servers_total != ensemble.num_servers:
        raise ContractError("scenario shape does not match the ensemble")
    return _choose(ensemble, s, raw_group_input(s, ensemble.feature))


def infer(ensemble: DdlEnsemble, s: Scenario) -> SchemeResult:
    """Place one scenario; the returned breakdown comes from the evaluator."""
    start = time.perf_counter()
    choice = best_of_k(ensemble, s)
    breakdown = evaluate(s, choice.decision)
    return SchemeResult(choice.decision, breakdown, "ddl", time.perf_counter() - start)


@dataclass(frozen=True)
class TrainingTrace:
    """One training iteration: the self-label's cost and per-network losses.

    Losses are NaN until the replay database fills and updates begin.
    """

    iteration: int
    chosen_q: float
    chosen_dnn: int
    losses: tuple[float, ...]


@dataclass
class TrainResult:
    ensemble: DdlEnsemble
    traces: list[TrainingTrace]


def train(config: TrainConfig, callback=None) -> TrainResult:
    """Run the self-labeling loop for ``config.iterations`` scenarios.

    Each iteration draws a fresh scenario, picks the cheapest of the K
    proposals as its label, and stores the pair.  Once the database is full,
    every network trains on its own minibatch and the shared extractor takes
    one step on the K-average of the gradients reaching it.  ``callback``,
    when given, is invoked as ``callback(completed_iterations, ensemble)``
    at zero and after every iteration.
    """
    _check_train_config(config)
    ensemble = build_ensemble(config)
    bits = bits_per_dt(ensemble.num_servers)
    db = ReplayDatabase(
        config.db_capacity,
        state_shape=(ensemble.num_dts, config.feature.input_width),
        target_width=ensemble.num_dts * bits,
    )

    # Separate streams keep scenario draws unaffected by sampling draws.
    root = np.random.default_rng(config.seed)
    scenario_seeds = np.random.default_rng(int(root.integers(2 ** 63)))
    sample_rng = np.random.default_rng(int(root.integers(2 ** 63)))

    traces: list[TrainingTrace] = []
    if callback is not None:
        callback(0, ensemble)

    for it in range(config.iterations):
        s = generate_random(int(scenario_seeds.integers(2 ** 63)), config.generator)
        raw = raw_group_input(s, config.feature)
        choice = _choose(ensemble, s, raw)
        db.insert(raw, encode_decision(choice.decision, ensemble.num_servers))

        losses = [float("nan")] * ensemble.num_dnns
        if db.full:
            losses = _update(ensemble, db, sample_rng, config.batch_size)

        traces.append(TrainingTrace(it, choice.cost, choice.dnn_index, tuple(losses)))
        if callback is not None:
            callback(it + 1, ensemble)
    return TrainResult(ensemble, traces)


def _update(ensemble, db, rng, batch_size) -> list[float]:
    """One training step: per-network batches, averaged extractor gradient."""
    ext = ensemble.extractor
    m, width = ensemble.num_dts, ensemble.feature.input_width
    ext_grads = None
    losses = []
    for dnn in ensemble.dnns:
        states, targets = db.sample(rng, batch_size)
        flat = states.reshape(batch_size * m, width)
        emb = ext.forward(flat).reshape(batch_size, -1)
        result = dnn.backward(emb, targets)
        dnn.adam_step(result.gradients)
        upstream = result.input_gradient.reshape(batch_size * m, -1)
        back = ext.backward_from_output(flat, upstream)
        if ext_grads is None:
            ext_grads = [(gw.copy(), gb.copy()) for gw, gb in back.gradients]
        else:
            for (aw, ab), (gw, gb) in zip(ext_grads, back.gradients):
                aw += gw
                ab += gb
        losses.append(result.loss)
    k = ensemble.num_dnns
    ext.adam_step([(gw / k, gb / k) for gw, gb in ext_grads])
    return losses


def save_ensemble(path, ensemble: DdlEnsemble) -> None:
    """Single-file checkpoint of the extractor and all K networks."""
    feat = ensemble.feature
    header = {
        "format": ENSEMBLE_FORMAT,
        "version": ENSEMBLE_VERSION,
        "feature": {
            "slots": feat.slots,
            "embedding_sizes": list(feat.embedding_sizes),
            "head_activation": feat.head_activation.value,
            "workload_scale": feat.workload_scale,
            "coord_scale": list(feat.coord_scale),
            "bandwidth_scale": feat.bandwidth_scale,
        },
        "num_dts": ensemble.num_dts,
        "num_servers": ensemble.num_servers,
        "extractor": model_meta(ensemble.extractor),
        "dnns": [model_meta(d) for d in ensemble.dnns],
    }
    state = model_state(ensemble.extractor, prefix="ext.")
    for k, dnn in enumerate(ensemble.dnns):
        state.update(model_state(dnn, prefix=f"dnn{k}."))
    with open(path, "wb") as f:
        np.savez(f, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **state)


def load_ensemble(path) -> DdlEnsemble:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != ENSEMBLE_FORMAT:
            raise ContractError("not an ensemble checkpoint")
        state = {k: data[k] for k in data.files if k != "header"}
    f = header["feature"]
    feature = FeatureConfig(
        slots=int(f["slots"]),
        embedding_sizes=tuple(int(n) for n in f["embedding_sizes"]),
        head_activation=Activation(f["head_activation"]),
        workload_scale=float(f["workload_scale"]),
        coord_scale=(float(f["coord_scale"][0]), float(f["coord_scale"][1])),
        bandwidth_scale=float(f["bandwidth_scale"]),
    )
    extractor = load_state(header["extractor"], state, prefix="ext.")
    dnns = [
        load_state(meta, state, prefix=f"dnn{k}.")
        for k, meta in enumerate(header["dnns"])
    ]
    return DdlEnsemble(
        feature, int(header["num_dts"]), int(header["num_servers"]), extractor, dnns
    )
