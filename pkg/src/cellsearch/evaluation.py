"""Candidate evaluators: a brute-forceable synthetic oracle and a trainable
shared-weight supernet on generated desk-scale data.

The tabular oracle scores a mask as squash(base + sum of per-path weights +
same-cell pairwise interactions); it is deterministic, serializable, and small
enough to brute force, which makes it the reference landscape for the
EA-vs-random benchmark.

The supernet keeps one parameter block per template path.  Candidates are
scored by a forward pass with non-selected paths contributing exactly zero
(their blocks are never touched), so evaluation needs no per-candidate
training.  Real pooling/convolution ops are replaced by small dense maps with
op-specific smooth activations; the search dynamics, not vision accuracy, are
what this models.
"""
from __future__ import annotations

import base64
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .candidate import Mask, MaskError, sample_mask, validate_mask
from .rng import as_generator
from .supergraph import REDUCTION, TemplateNetwork

DEFAULT_DROPOUT = 0.1
ENUMERATION_CAP = 2_000_000


class EvaluationError(RuntimeError):
    pass


class TrainingDiverged(EvaluationError):
    """Non-finite loss during template training; parameters were rolled back."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}; parameters rolled back")
        self.epoch = epoch


# ---------------------------------------------------------------------------
# Evaluator configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str  # "tabular" | "supernet"
    seed: int = 0
    dropout_prob: float = DEFAULT_DROPOUT
    dataset: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("tabular", "supernet"):
            raise EvaluationError(f"unknown evaluator kind {self.kind!r}")
        if not (0.0 <= self.dropout_prob < 1.0):
            raise EvaluationError("dropout_prob must be in [0, 1)")

    def build(self, template: TemplateNetwork):
        if self.kind == "tabular":
            return generate_tabular_oracle(template, self.seed, **_tabular_params(self.dataset))
        return SupernetEvaluator(template, self)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "dropout_prob": self.dropout_prob,
            "dataset": dict(self.dataset),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EvaluatorSpec":
        return cls(
            kind=doc["kind"],
            seed=doc["seed"],
            dropout_prob=doc["dropout_prob"],
            dataset=dict(doc.get("dataset", {})),
        )


def _tabular_params(dataset: dict) -> dict:
    allowed = {
        "structure",
        "plant_weight",
        "plant_jitter",
        "weight_sigma",
        "interaction_sigma",
        "interaction_density",
        "base",
        "scale",
    }
    return {k: v for k, v in dataset.items() if k in allowed}


# ---------------------------------------------------------------------------
# Tabular oracle
# ---------------------------------------------------------------------------


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@dataclass(frozen=True)
class TabularOracle:
    """Deterministic stand-in for validation accuracy; accuracy in [0, 1].

    `scale` flattens the squash: small values keep accuracies near 0.5 so the
    per-path credit (accuracy - alpha) stays comparable to the uniform initial
    fitness and the search concentrates gradually instead of locking onto the
    first decent candidates.
    """

    template_version: int
    path_count: int
    base: float
    weights: np.ndarray
    interactions: tuple[tuple[int, int, float], ...]
    scale: float = 1.0
    kind: str = "tabular"
    dropout_prob: float = 0.0

    def __post_init__(self):
        self.weights.setflags(write=False)

    def score(self, active: frozenset[int] | tuple[int, ...]) -> float:
        active = frozenset(active)
        total = self.base + sum(self.weights[p] for p in active)
        for p, q, coef in self.interactions:
            if p in active and q in active:
                total += coef
        return _logistic(self.scale * total)

    def evaluate(self, mask: Mask, rng=None) -> float:
        if mask.template_version != self.template_version:
            raise MaskError("mask/oracle template version mismatch")
        if len(mask) != self.path_count:
            raise MaskError("mask length does not match the oracle")
        return self.score(mask.active())

    def finalize(self, mask: Mask, budget_epochs: int = 0, rng=None) -> "FinalReport":
        # Table lookup, dropout ignored; parameter count proxied by popcount.
        return FinalReport(
            accuracy=self.evaluate(mask), parameter_count=mask.popcount, epochs=0, curve=()
        )

    def to_json(self) -> str:
        doc = {
            "schema_version": 1,
            "template_version": self.template_version,
            "path_count": self.path_count,
            "base": self.base,
            "scale": self.scale,
            "weights": [float(w) for w in self.weights],
            "interactions": [[int(p), int(q), float(c)] for p, q, c in self.interactions],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "TabularOracle":
        doc = json.loads(text)
        return cls(
            template_version=doc["template_version"],
            path_count=doc["path_count"],
            base=doc["base"],
            scale=doc.get("scale", 1.0),
            weights=np.array(doc["weights"], dtype=float),
            interactions=tuple((p, q, c) for p, q, c in doc["interactions"]),
        )


def node_pair_choices(template: TemplateNetwork) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Per node: every (path, path) pair with distinct sources."""
    paths = template.paths
    out: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for key, group in template.node_groups().items():
        pairs = [
            (p, q)
            for p, q in itertools.combinations(group, 2)
            if paths[p].source != paths[q].source
        ]
        out[key] = pairs
    return out


def count_valid_masks(template: TemplateNetwork) -> int:
    total = 1
    for pairs in node_pair_choices(template).values():
        total *= len(pairs)
    return total


def enumerate_cell_selections(template: TemplateNetwork, cell_id: int, cap: int = ENUMERATION_CAP):
    """All valid path selections inside one cell, as tuples of path ids."""
    choices = node_pair_choices(template)
    node_pairs = [pairs for (c, _n), pairs in choices.items() if c == cell_id]
    size = 1
    for pairs in node_pairs:
        size *= len(pairs)
    if size > cap:
        raise EvaluationError(
            f"cell {cell_id} has {size} valid selections, over the enumeration cap {cap}"
        )
    for combo in itertools.product(*node_pairs):
        yield tuple(p for pair in combo for p in pair)


def enumerate_valid_masks(template: TemplateNetwork, cap: int = ENUMERATION_CAP):
    """Every valid mask of the template; guard with `cap`, this is exponential."""
    total = count_valid_masks(template)
    if total > cap:
        raise EvaluationError(f"{total} valid masks, over the enumeration cap {cap}")
    per_cell = [
        list(enumerate_cell_selections(template, cell.cell_id, cap)) for cell in template.cells
    ]
    for combo in itertools.product(*per_cell):
        ids = tuple(p for sel in combo for p in sel)
        yield Mask.from_paths(ids, template.path_count, template.version)


def _cell_argmax(
    template: TemplateNetwork, oracle: TabularOracle, cell_id: int, cap: int
) -> tuple[tuple[int, ...], float, float]:
    """Best selection of one cell plus the top-two inner scores."""
    inter = [
        (p, q, c)
        for p, q, c in oracle.interactions
        if template.paths[p].cell_id == cell_id
    ]
    best_sel, best, second = None, -math.inf, -math.inf
    for selection in enumerate_cell_selections(template, cell_id, cap):
        active = set(selection)
        score = sum(oracle.weights[p] for p in selection)
        score += sum(c for p, q, c in inter if p in active and q in active)
        if score > best:
            best_sel, second, best = selection, best, score
        elif score > second:
            second = score
    return best_sel, best, second


def brute_force_optimum(
    template: TemplateNetwork, oracle: TabularOracle, cap: int = ENUMERATION_CAP
) -> tuple[Mask, float]:
    """Global argmax over valid masks.

    Interactions never cross cells and the squash is monotone, so the global
    optimum is the per-cell argmax combined; each cell is enumerated fully.
    """
    ids: list[int] = []
    for cell in template.cells:
        selection, _, _ = _cell_argmax(template, oracle, cell.cell_id, cap)
        ids.extend(selection)
    mask = Mask.from_paths(ids, template.path_count, template.version)
    return mask, oracle.evaluate(mask)


def generate_tabular_oracle(
    template: TemplateNetwork,
    seed: int,
    structure: str = "planted",
    plant_weight: float = 1.0,
    plant_jitter: float = 0.35,
    weight_sigma: float = 0.02,
    interaction_sigma: float = 0.01,
    interaction_density: float = 0.05,
    base: float | None = None,
    scale: float = 0.02,
    uniqueness_cap: int = 200_000,
) -> TabularOracle:
    """Seeded landscape; regenerates with a shifted seed if a cell's argmax ties.

    The default "planted" structure gives one strong operation per (node,
    source) slot over a near-zero noise floor, so per-path credit assignment
    has a clean signal to learn from; "gaussian" draws every weight from one
    normal distribution.  `base` defaults to minus the expected planted sum of
    a random mask, centering typical accuracies near 0.5.
    """
    if structure not in ("planted", "gaussian"):
        raise EvaluationError(f"unknown oracle structure {structure!r}")
    for attempt in range(16):
        rng = np.random.default_rng(int(seed) + attempt)
        if structure == "gaussian":
            weights = rng.normal(0.0, weight_sigma if weight_sigma > 0 else 0.5, template.path_count)
            base_used = 0.0 if base is None else base
        else:
            weights = rng.normal(0.0, weight_sigma, template.path_count)
            slots: dict[tuple[int, int, int], list[int]] = {}
            per_node_sources: dict[tuple[int, int], set[int]] = {}
            for path in template.paths:
                slots.setdefault((path.cell_id, path.dst_node, path.source), []).append(path.path_id)
                per_node_sources.setdefault((path.cell_id, path.dst_node), set()).add(path.source)
            for (cell_id, node_id), sources in sorted(per_node_sources.items()):
                chosen = rng.choice(sorted(sources), size=2, replace=False)
                for source in chosen:
                    ids = slots[(cell_id, node_id, int(source))]
                    star = int(ids[rng.integers(0, len(ids))])
                    weights[star] = plant_weight * (1.0 + plant_jitter * abs(rng.normal()))
            base_used = -1.3 * plant_weight if base is None else base
        interactions = []
        for group in template.cell_groups().values():
            for p, q in itertools.combinations(group, 2):
                if rng.random() < interaction_density:
                    interactions.append((p, q, float(rng.normal(0.0, interaction_sigma))))
        oracle = TabularOracle(
            template_version=template.version,
            path_count=template.path_count,
            base=base_used,
            scale=scale,
            weights=weights,
            interactions=tuple(interactions),
        )
        try:
            unique = True
            for cell in template.cells:
                _, best, second = _cell_argmax(template, oracle, cell.cell_id, uniqueness_cap)
                if best - second <= 1e-9:
                    unique = False
                    break
        except EvaluationError:
            unique = True  # too large to check; continuous weights make ties measure-zero
        if unique:
            return oracle
    raise EvaluationError("could not generate an oracle with a unique argmax")


def recommended_alpha(
    template: TemplateNetwork, oracle: TabularOracle, offset: float = 1.7
) -> float:
    """Aspiration threshold for Eq. 1 runs on a tabular landscape.

    Placed `offset` inner-score units below the brute-forced optimum: stalled
    candidates then earn gently negative credit (their paths bleed fitness and
    sampling re-diversifies) while near-optimal ones reinforce.
    """
    _, best = brute_force_optimum(template, oracle)
    best_inner = math.log(best / (1.0 - best)) / oracle.scale
    return _logistic(oracle.scale * (best_inner - offset))


# ---------------------------------------------------------------------------
# Desk-scale supernet
# ---------------------------------------------------------------------------


def _act(op_tag: str, z: np.ndarray) -> np.ndarray:
    if op_tag == "skip":
        return z
    if op_tag in ("max_pool_3x3", "conv_1x3_3x1"):
        return np.logaddexp(0.0, z)  # softplus
    return np.tanh(z)


def _act_grad(op_tag: str, z: np.ndarray) -> np.ndarray:
    if op_tag == "skip":
        return np.ones_like(z)
    if op_tag in ("max_pool_3x3", "conv_1x3_3x1"):
        return 1.0 / (1.0 + np.exp(-z))
    t = np.tanh(z)
    return 1.0 - t * t


def make_dataset(params: dict, seed: int):
    """Seeded toy classification task; checked in as a generator, not files."""
    name = params.get("name", "moons")
    n = int(params.get("n", 240))
    noise = float(params.get("noise", 0.15))
    val_fraction = float(params.get("val_fraction", 1 / 3))
    rng = np.random.default_rng(seed)
    if name == "moons":
        half = n // 2
        t0 = rng.uniform(0, math.pi, half)
        t1 = rng.uniform(0, math.pi, n - half)
        outer = np.stack([np.cos(t0), np.sin(t0)], axis=1)
        inner = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
        x = np.concatenate([outer, inner]) + rng.normal(0, noise, (n, 2))
        y = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    elif name == "clusters":
        half = n // 2
        x = np.concatenate(
            [
                rng.normal((-1.0, 0.0), noise + 0.3, (half, 2)),
                rng.normal((1.0, 0.0), noise + 0.3, (n - half, 2)),
            ]
        )
        y = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    else:
        raise EvaluationError(f"unknown dataset {name!r}")
    order = rng.permutation(n)
    x, y = x[order], y[order]
    n_val = max(1, int(n * val_fraction))
    return x[n_val:], y[n_val:], x[:n_val], y[:n_val]


class SupernetEvaluator:
    """Shared-parameter template network over the cell DAG.

    One dense block (W, b) per path; node value = sum of its two active path
    outputs; cell output = mean of the cell's leaf nodes; cell input 0 is the
    previous cell's output, input 1 the one before (stem fallback).  Masked
    paths are never computed, so their parameters cannot affect a candidate.
    """

    kind = "supernet"

    def __init__(self, template: TemplateNetwork, spec: EvaluatorSpec):
        self.template = template
        self.template_version = template.version
        self.spec = spec
        self.dropout_prob = spec.dropout_prob
        ds = spec.dataset
        self.width = int(ds.get("width", 8))
        self.lr = float(ds.get("lr", 0.1))
        self.batch_size = int(ds.get("batch_size", 32))
        self.classes = 2
        self.x_train, self.y_train, self.x_val, self.y_val = make_dataset(ds, spec.seed)

        self._widths()  # sets in0/in1/out width per cell position
        rng = np.random.default_rng(spec.seed)
        self.stem = self._init_block(rng, self.x_train.shape[1], self.width)
        self.path_params = {
            path.path_id: self._init_block(rng, *self._path_dims(path))
            for path in template.paths
        }
        self.head = self._init_block(rng, self._out_width[-1], self.classes)
        # Fixed validation masks: a stable per-epoch estimator of template quality.
        probe_rng = np.random.default_rng(spec.seed + 1)
        uniform = np.ones(template.path_count)
        self.val_masks = tuple(
            sample_mask(template, uniform, probe_rng) for _ in range(8)
        )

    # -- geometry ---------------------------------------------------------

    def _widths(self):
        self._in0_width, self._in1_width, self._out_width = [], [], []
        outs: list[int] = []
        for position, cell in enumerate(self.template.cells):
            in0 = outs[position - 1] if position >= 1 else self.width
            in1 = outs[position - 2] if position >= 2 else self.width
            out = 2 * in0 if cell.kind == REDUCTION else in0
            self._in0_width.append(in0)
            self._in1_width.append(in1)
            self._out_width.append(out)
            outs.append(out)

    def _cell_position(self, cell_id: int) -> int:
        for position, cell in enumerate(self.template.cells):
            if cell.cell_id == cell_id:
                return position
        raise EvaluationError(f"no cell {cell_id}")

    def _path_dims(self, path) -> tuple[int, int]:
        position = self._cell_position(path.cell_id)
        out = self._out_width[position]
        if path.source == 0:
            return self._in0_width[position], out
        if path.source == 1:
            return self._in1_width[position], out
        return out, out

    @staticmethod
    def _init_block(rng: np.random.Generator, d_in: int, d_out: int) -> dict:
        return {
            "W": rng.normal(0.0, 1.0 / math.sqrt(d_in), (d_in, d_out)),
            "b": np.zeros(d_out),
        }

    def parameter_count(self, mask: Mask) -> int:
        return sum(
            self.path_params[p]["W"].size + self.path_params[p]["b"].size
            for p in mask.active()
        )

    # -- forward / backward ------------------------------------------------

    def _forward(self, mask: Mask, x: np.ndarray, dropped: frozenset[int] = frozenset()):
        paths = self.template.paths
        active_by_node: dict[tuple[int, int], list] = {}
        for p in mask.active():
            path = paths[p]
            active_by_node.setdefault((path.cell_id, path.dst_node), []).append(path)

        cache = {"x": x, "paths": {}, "nodes": {}, "cells": [], "dropped": dropped}
        z_stem = x @ self.stem["W"] + self.stem["b"]
        h_stem = np.tanh(z_stem)
        cache["z_stem"] = z_stem
        cache["h_stem"] = h_stem

        outs: list[np.ndarray] = []
        for position, cell in enumerate(self.template.cells):
            in0 = outs[position - 1] if position >= 1 else h_stem
            in1 = outs[position - 2] if position >= 2 else h_stem
            node_vals: dict[int, np.ndarray] = {}
            for node in cell.nodes:
                total = np.zeros((x.shape[0], self._out_width[position]))
                for path in active_by_node.get((cell.cell_id, node.node_id), ()):
                    src = in0 if path.source == 0 else in1 if path.source == 1 else node_vals[path.source - 2]
                    block = self.path_params[path.path_id]
                    z = src @ block["W"] + block["b"]
                    h = _act(path.op.tag, z)
                    if path.path_id in dropped:
                        h = np.zeros_like(h)
                    cache["paths"][path.path_id] = (src, z)
                    total = total + h
                node_vals[node.node_id] = total
            consumed = {
                path.source - 2
                for plist in active_by_node.values()
                for path in plist
                if path.cell_id == cell.cell_id and path.source >= 2
            }
            leaves = [n.node_id for n in cell.nodes if n.node_id not in consumed]
            out = sum(node_vals[leaf] for leaf in leaves) / len(leaves)
            cache["nodes"][cell.cell_id] = node_vals
            cache["cells"].append({"leaves": leaves, "out": out})
            outs.append(out)

        logits = outs[-1] @ self.head["W"] + self.head["b"]
        cache["outs"] = outs
        cache["logits"] = logits
        return logits, cache

    @staticmethod
    def _softmax_ce(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        probs = expd / expd.sum(axis=1, keepdims=True)
        n = logits.shape[0]
        loss = -np.mean(np.log(probs[np.arange(n), y] + 1e-300))
        grad = probs.copy()
        grad[np.arange(n), y] -= 1.0
        return float(loss), grad / n

    def loss_and_grads(self, mask: Mask, x: np.ndarray, y: np.ndarray):
        """Loss plus gradients for stem, head, and the mask's active blocks."""
        validate_mask(self.template, mask)
        logits, cache = self._forward(mask, x)
        loss, dlogits = self._softmax_ce(logits, y)

        grads = {
            "stem": {"W": np.zeros_like(self.stem["W"]), "b": np.zeros_like(self.stem["b"])},
            "head": {"W": np.zeros_like(self.head["W"]), "b": np.zeros_like(self.head["b"])},
            "paths": {
                p: {
                    "W": np.zeros_like(self.path_params[p]["W"]),
                    "b": np.zeros_like(self.path_params[p]["b"]),
                }
                for p in mask.active()
            },
        }

        outs = cache["outs"]
        grads["head"]["W"] += outs[-1].T @ dlogits
        grads["head"]["b"] += dlogits.sum(axis=0)
        g_out = [np.zeros_like(o) for o in outs]
        g_out[-1] += dlogits @ self.head["W"].T
        g_stem = np.zeros_like(cache["h_stem"])

        paths = self.template.paths
        active_by_node: dict[tuple[int, int], list] = {}
        for p in mask.active():
            path = paths[p]
            active_by_node.setdefault((path.cell_id, path.dst_node), []).append(path)

        for position in range(len(self.template.cells) - 1, -1, -1):
            cell = self.template.cells[position]
            cell_cache = cache["cells"][position]
            node_vals = cache["nodes"][cell.cell_id]
            g_node = {n.node_id: np.zeros_like(node_vals[n.node_id]) for n in cell.nodes}
            share = g_out[position] / len(cell_cache["leaves"])
            for leaf in cell_cache["leaves"]:
                g_node[leaf] += share

            g_in0 = None
            g_in1 = None
            for node in reversed(cell.nodes):
                upstream = g_node[node.node_id]
                for path in active_by_node.get((cell.cell_id, node.node_id), ()):
                    if path.path_id in cache["dropped"]:
                        continue
                    src, z = cache["paths"][path.path_id]
                    dz = upstream * _act_grad(path.op.tag, z)
                    block = self.path_params[path.path_id]
                    grads["paths"][path.path_id]["W"] += src.T @ dz
                    grads["paths"][path.path_id]["b"] += dz.sum(axis=0)
                    dsrc = dz @ block["W"].T
                    if path.source == 0:
                        g_in0 = dsrc if g_in0 is None else g_in0 + dsrc
                    elif path.source == 1:
                        g_in1 = dsrc if g_in1 is None else g_in1 + dsrc
                    else:
                        g_node[path.source - 2] += dsrc
            if g_in0 is not None:
                if position >= 1:
                    g_out[position - 1] += g_in0
                else:
                    g_stem += g_in0
            if g_in1 is not None:
                if position >= 2:
                    g_out[position - 2] += g_in1
                else:
                    g_stem += g_in1

        dz_stem = g_stem * (1.0 - cache["h_stem"] ** 2)
        grads["stem"]["W"] += cache["x"].T @ dz_stem
        grads["stem"]["b"] += dz_stem.sum(axis=0)
        return loss, grads

    def _sgd_step(self, mask: Mask, grads: dict) -> None:
        for name in ("stem", "head"):
            block = getattr(self, name)
            block["W"] -= self.lr * grads[name]["W"]
            block["b"] -= self.lr * grads[name]["b"]
        for p, g in grads["paths"].items():
            self.path_params[p]["W"] -= self.lr * g["W"]
            self.path_params[p]["b"] -= self.lr * g["b"]

    # -- public operations ---------------------------------------------------

    def train(
        self,
        epochs: int,
        rng_seed,
        stop_signal=None,
        on_epoch=None,
    ) -> list[tuple[int, float, float]]:
        """Shared-parameter training: one random valid mask per batch.

        Emits one (epoch, train_loss, val_loss) point per completed epoch;
        stop_signal halts between epochs with parameters retained.  A
        non-finite loss rolls parameters back to the last finite epoch and
        raises TrainingDiverged.
        """
        if epochs < 1:
            raise EvaluationError(f"epochs must be >= 1, got {epochs}")
        rng = as_generator(rng_seed)
        uniform = np.ones(self.template.path_count)
        curve: list[tuple[int, float, float]] = []
        snapshot = self.state_dict()
        for epoch in range(1, epochs + 1):
            if stop_signal is not None and stop_signal():
                break
            order = rng.permutation(len(self.x_train))
            batch_losses = []
            for start in range(0, len(order), self.batch_size):
                batch = order[start : start + self.batch_size]
                mask = sample_mask(self.template, uniform, rng)
                loss, grads = self.loss_and_grads(mask, self.x_train[batch], self.y_train[batch])
                batch_losses.append(loss)
                self._sgd_step(mask, grads)
            train_loss = float(np.mean(batch_losses))
            val_loss = float(
                np.mean(
                    [
                        self._softmax_ce(self._forward(m, self.x_val)[0], self.y_val)[0]
                        for m in self.val_masks
                    ]
                )
            )
            if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
                self.load_state_dict(snapshot)
                raise TrainingDiverged(epoch)
            snapshot = self.state_dict()
            curve.append((epoch, train_loss, val_loss))
            if on_epoch is not None:
                on_epoch(epoch, train_loss, val_loss)
        return curve

    def evaluate(self, mask: Mask, rng=None) -> float:
        """Validation accuracy with masked paths zeroed and active paths
        independently dropped at dropout_prob (seeded)."""
        validate_mask(self.template, mask)
        dropped: frozenset[int] = frozenset()
        if self.dropout_prob > 0.0:
            gen = as_generator(rng if rng is not None else 0)
            draws = gen.random(mask.popcount)
            dropped = frozenset(
                p for p, u in zip(mask.active(), draws) if u < self.dropout_prob
            )
        logits, _ = self._forward(mask, self.x_val, dropped)
        predictions = logits.argmax(axis=1)
        return float(np.mean(predictions == self.y_val))

    def finalize(self, mask: Mask, budget_epochs: int, rng_seed=0) -> "FinalReport":
        """Retrain the standalone subnetwork from fresh parameters."""
        validate_mask(self.template, mask)
        if budget_epochs < 1:
            raise EvaluationError(f"budget_epochs must be >= 1, got {budget_epochs}")
        rng = as_generator(rng_seed)
        fresh = SupernetEvaluator(self.template, self.spec)
        init = np.random.default_rng(int(rng.integers(0, 2**63 - 1)))
        fresh.stem = fresh._init_block(init, self.x_train.shape[1], self.width)
        for p in mask.active():
            fresh.path_params[p] = fresh._init_block(init, *fresh._path_dims(self.template.paths[p]))
        fresh.head = fresh._init_block(init, fresh._out_width[-1], fresh.classes)

        curve: list[tuple[int, float, float]] = []
        for epoch in range(1, budget_epochs + 1):
            order = rng.permutation(len(fresh.x_train))
            batch_losses = []
            for start in range(0, len(order), fresh.batch_size):
                batch = order[start : start + fresh.batch_size]
                loss, grads = fresh.loss_and_grads(mask, fresh.x_train[batch], fresh.y_train[batch])
                batch_losses.append(loss)
                fresh._sgd_step(mask, grads)
            val_loss = fresh._softmax_ce(fresh._forward(mask, fresh.x_val)[0], fresh.y_val)[0]
            if not math.isfinite(float(np.mean(batch_losses))):
                raise TrainingDiverged(epoch)
            curve.append((epoch, float(np.mean(batch_losses)), float(val_loss)))
        logits, _ = fresh._forward(mask, fresh.x_val)
        accuracy = float(np.mean(logits.argmax(axis=1) == fresh.y_val))
        return FinalReport(
            accuracy=accuracy,
            parameter_count=fresh.parameter_count(mask),
            epochs=budget_epochs,
            curve=tuple(curve),
        )

    # -- state ----------------------------------------------------------------

    def state_dict(self) -> dict:
        def encode(block):
            return {
                name: {
                    "shape": list(arr.shape),
                    "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(),
                }
                for name, arr in block.items()
            }

        return {
            "stem": encode(self.stem),
            "head": encode(self.head),
            "paths": {str(p): encode(block) for p, block in self.path_params.items()},
            "val_masks": [m.to_hex() for m in self.val_masks],
        }

    def load_state_dict(self, doc: dict) -> None:
        def decode(entry):
            return {
                name: np.frombuffer(
                    base64.b64decode(packed["data"]), dtype="<f8"
                ).reshape(packed["shape"]).copy()
                for name, packed in entry.items()
            }

        self.stem = decode(doc["stem"])
        self.head = decode(doc["head"])
        self.path_params = {int(p): decode(block) for p, block in doc["paths"].items()}
        self.val_masks = tuple(
            Mask.from_hex(h, self.template.path_count, self.template_version)
            for h in doc["val_masks"]
        )


@dataclass(frozen=True)
class FinalReport:
    accuracy: float
    parameter_count: int
    epochs: int
    curve: tuple[tuple[int, float, float], ...]


# Module-level conveniences matching the operation names used elsewhere.


def train_template(evaluator: SupernetEvaluator, epochs: int, rng_seed, stop_signal=None, on_epoch=None):
    if not isinstance(evaluator, SupernetEvaluator):
        raise EvaluationError("only supernet evaluators are trainable")
    return evaluator.train(epochs, rng_seed, stop_signal=stop_signal, on_epoch=on_epoch)


def evaluate_candidate(evaluator, mask: Mask, rng_seed=None) -> float:
    return evaluator.evaluate(mask, rng_seed)


def finalize_candidate(evaluator, mask: Mask, budget_epochs: int = 20, rng_seed=0) -> FinalReport:
    return evaluator.finalize(mask, budget_epochs, rng_seed)
