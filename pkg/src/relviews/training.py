"""End-to-end training: encoder -> edit distance to proxies -> anchor loss.

Each batch forwards its instances through the encoder, scores them against
every initialized class proxy, backpropagates the anchor loss through the
distance, cost head, and encoder, applies an Adam step with a stepped
learning-rate schedule, and then refreshes the touched proxies by online
clustering. Three ablation switches cover the input-graph edge rule (CG),
graph-valued proxies (PD), and graph-space matching (TR).
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from .autodiff import Var
from .checkpoint import read_checkpoint, write_checkpoint
from .complementarity import ComplementarityConfig, build_dataset
from .encoder import EncoderConfig, GatParams, init_params
from .errors import ConfigError, NumericError
from .graphs import ViewGraph
from .hed import CostHead, hed_values_multi
from .proxies import (ProxyAnchorConfig, ProxyGraph, SinkhornConfig, init_proxy,
                      proxy_anchor_loss, update_proxies)
from .synth import SynthDataset


@dataclass(frozen=True)
class AblationConfig:
    use_complementarity_graph: bool = True   # CG: 1/|dot| local edges vs all-ones
    proxy_as_graph: bool = True              # PD: concept graph vs single vector
    transitivity_recovery: bool = True       # TR: edit distance vs mean-pool matching


@dataclass(frozen=True)
class TrainConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    anchor: ProxyAnchorConfig = field(default_factory=ProxyAnchorConfig)
    comp: ComplementarityConfig = field(default_factory=ComplementarityConfig)
    ablations: AblationConfig = field(default_factory=AblationConfig)
    epochs: int = 200
    learning_rate: float = 0.005
    lr_decay: float = 0.1
    lr_decay_every: int = 100
    weight_decay: float = 5e-4
    batch_size: int = 8
    proxy_momentum: float = 0.9
    cost_head_hidden: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.lr_decay <= 0 or self.lr_decay_every < 1:
            raise ConfigError("invalid learning-rate schedule")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass
class TrainReport:
    epoch_losses: list[float]
    final_train_accuracy: float
    final_test_accuracy: float | None
    wall_clock_seconds: float
    checkpoint_path: str | None = None

    def losses_csv(self) -> str:
        lines = ["epoch,loss"]
        lines += [f"{e},{v:.9g}" for e, v in enumerate(self.epoch_losses)]
        return "\n".join(lines) + "\n"


@dataclass
class TrainedModel:
    config: TrainConfig
    in_dim: int
    params: GatParams
    cost_head: CostHead
    proxies: dict[int, ProxyGraph] = field(default_factory=dict)
    proxy_vectors: dict[int, np.ndarray] = field(default_factory=dict)

    # -- inference ---------------------------------------------------------
    def encode(self, graph: ViewGraph) -> ViewGraph:
        out, _ = enc.forward(self.params, graph, want_grad=False)
        return out

    def class_ids(self) -> list[int]:
        src = self.proxies if self.config.ablations.proxy_as_graph else self.proxy_vectors
        return sorted(src)

    def distances(self, srg: ViewGraph) -> np.ndarray:
        """Distance of one encoded instance to every known class, id order."""
        ids = self.class_ids()
        row = _distance_row(self, ad.constant(srg.node_features),
                            ad.constant(_proxy_targets(self, ids)),
                            srg.num_views, self.cost_head.bind(False))
        return row.value.copy()

    def classify_graph(self, graph: ViewGraph) -> int:
        ids = self.class_ids()
        if not ids:
            raise ValueError("model has no proxies")
        d = self.distances(self.encode(graph))
        return ids[int(np.argmin(d))]

    # -- persistence -------------------------------------------------------
    def save(self, path) -> None:
        cfg = self.config
        config = {
            "in_dim": str(self.in_dim),
            "encoder.layers": str(cfg.encoder.num_layers),
            "encoder.heads": str(cfg.encoder.heads_per_layer),
            "encoder.hidden_dim": str(cfg.encoder.hidden_dim),
            "encoder.leaky_slope": repr(cfg.encoder.leaky_slope),
            "encoder.edge_update": str(cfg.encoder.edge_update).lower(),
            "encoder.norm_eps": repr(cfg.encoder.norm_eps),
            "sinkhorn.epsilon": repr(cfg.sinkhorn.entropic_regularizer),
            "sinkhorn.max_iters": str(cfg.sinkhorn.max_iters),
            "sinkhorn.tol": repr(cfg.sinkhorn.marginal_tol),
            "anchor.margin": repr(cfg.anchor.margin),
            "anchor.scale": repr(cfg.anchor.scale),
            "comp.weight_cap": repr(cfg.comp.weight_cap),
            "comp.normalize": str(cfg.comp.normalize_embeddings).lower(),
            "train.epochs": str(cfg.epochs),
            "train.lr": repr(cfg.learning_rate),
            "train.lr_decay": repr(cfg.lr_decay),
            "train.lr_decay_every": str(cfg.lr_decay_every),
            "train.weight_decay": repr(cfg.weight_decay),
            "train.batch_size": str(cfg.batch_size),
            "train.proxy_momentum": repr(cfg.proxy_momentum),
            "train.cost_hidden": str(cfg.cost_head_hidden),
            "train.seed": str(cfg.seed),
            "ablate.cg": str(cfg.ablations.use_complementarity_graph).lower(),
            "ablate.pd": str(cfg.ablations.proxy_as_graph).lower(),
            "ablate.tr": str(cfg.ablations.transitivity_recovery).lower(),
        }
        tensors = list(self.params.named_tensors()) + list(self.cost_head.named_tensors())
        for cid in sorted(self.proxies):
            tensors.append((f"proxy{cid}.nodes", self.proxies[cid].node_centroids))
            tensors.append((f"proxy{cid}.edges", self.proxies[cid].edge_centroids))
        for cid in sorted(self.proxy_vectors):
            tensors.append((f"proxy{cid}.vector", self.proxy_vectors[cid]))
        write_checkpoint(path, config, tensors)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        config, tensors = read_checkpoint(path)

        def flag(key):
            return config[key] == "true"

        cfg = TrainConfig(
            encoder=EncoderConfig(
                num_layers=int(config["encoder.layers"]),
                heads_per_layer=int(config["encoder.heads"]),
                hidden_dim=int(config["encoder.hidden_dim"]),
                leaky_slope=float(config["encoder.leaky_slope"]),
                edge_update=flag("encoder.edge_update"),
                norm_eps=float(config["encoder.norm_eps"])),
            sinkhorn=SinkhornConfig(
                entropic_regularizer=float(config["sinkhorn.epsilon"]),
                max_iters=int(config["sinkhorn.max_iters"]),
                marginal_tol=float(config["sinkhorn.tol"])),
            anchor=ProxyAnchorConfig(
                margin=float(config["anchor.margin"]),
                scale=float(config["anchor.scale"])),
            comp=ComplementarityConfig(
                weight_cap=float(config["comp.weight_cap"]),
                normalize_embeddings=flag("comp.normalize")),
            ablations=AblationConfig(
                use_complementarity_graph=flag("ablate.cg"),
                proxy_as_graph=flag("ablate.pd"),
                transitivity_recovery=flag("ablate.tr")),
            epochs=int(config["train.epochs"]),
            learning_rate=float(config["train.lr"]),
            lr_decay=float(config["train.lr_decay"]),
            lr_decay_every=int(config["train.lr_decay_every"]),
            weight_decay=float(config["train.weight_decay"]),
            batch_size=int(config["train.batch_size"]),
            proxy_momentum=float(config["train.proxy_momentum"]),
            cost_head_hidden=int(config["train.cost_hidden"]),
            seed=int(config["train.seed"]),
        )
        in_dim = int(config["in_dim"])
        params = init_params(cfg.encoder, in_dim, seed=cfg.seed)
        head = CostHead(cfg.encoder.hidden_dim, cfg.cost_head_hidden, seed=cfg.seed + 1)
        model = cls(cfg, in_dim, params, head)
        node_stash: dict[int, np.ndarray] = {}
        edge_stash: dict[int, np.ndarray] = {}
        for name, arr in tensors:
            if name.startswith("proxy"):
                slot, kind = name.split(".", 1)
                cid = int(slot[len("proxy"):])
                if kind == "nodes":
                    node_stash[cid] = arr
                elif kind == "edges":
                    edge_stash[cid] = arr
                else:
                    model.proxy_vectors[cid] = arr
            elif name.startswith("cost."):
                head.set_tensor(name, arr)
            else:
                params.set_tensor(name, arr)
        for cid in sorted(node_stash):
            model.proxies[cid] = ProxyGraph(cid, node_stash[cid], edge_stash[cid])
        return model


class Adam:
    """Adam with L2 weight decay folded into the gradient (betas 0.9/0.999)."""

    def __init__(self, named_arrays: list[tuple[str, np.ndarray]],
                 weight_decay: float = 0.0, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.arrays = named_arrays
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {name: np.zeros_like(arr) for name, arr in named_arrays}
        self.v = {name: np.zeros_like(arr) for name, arr in named_arrays}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in self.arrays:
            g = grads[name] + self.weight_decay * arr
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            arr -= lr * mhat / (np.sqrt(vhat) + self.eps)


def _anchor_loss_var(table: Var, labels, class_ids, cfg: ProxyAnchorConfig) -> Var:
    """Anchor loss as a tape node; local gradients come from the closed form."""
    loss, dh = proxy_anchor_loss(table.value, labels, class_ids, cfg)

    def bk(g):
        return (g * dh,)
    return Var(np.asarray(loss), requires_grad=table.requires_grad,
               parents=(table,), backward=bk)


def _proxy_targets(model: TrainedModel, class_ids: list[int]) -> np.ndarray:
    """Stacked per-class comparison targets matching the ablation mode."""
    ab = model.config.ablations
    if not ab.proxy_as_graph:
        return np.stack([model.proxy_vectors[cid] for cid in class_ids])
    if not ab.transitivity_recovery:
        return np.stack([model.proxies[cid].node_centroids.mean(axis=0)
                         for cid in class_ids])
    return np.vstack([model.proxies[cid].node_centroids for cid in class_ids])


def _distance_row(model: TrainedModel, nodes: Var, targets: Var, slots: int,
                  bound_head) -> Var:
    """Distances of one encoded instance to every class, as a (C,) Var."""
    ab = model.config.ablations
    if ab.proxy_as_graph and ab.transitivity_recovery:
        return hed_values_multi(nodes, targets, slots, bound_head)
    pooled = ad.reshape(ad.vmean(nodes, axis=0), (1, nodes.shape[1]))
    return ad.reshape(ad.pairwise_l2(pooled, targets), (targets.shape[0],))


def _init_proxies_for(model: TrainedModel, labels_in_batch, srgs_by_class,
                      cfg: TrainConfig) -> None:
    """First-batch cluster means for classes not seen before."""
    ab = cfg.ablations
    for cid in sorted(set(int(l) for l in labels_in_batch)):
        if ab.proxy_as_graph:
            if cid in model.proxies:
                continue
            seed_proxy = init_proxy(cid, srgs_by_class[cid][0])
            model.proxies[cid] = update_proxies(seed_proxy, srgs_by_class[cid],
                                                cfg.sinkhorn, momentum=0.0)
        else:
            if cid in model.proxy_vectors:
                continue
            means = [g.node_features.mean(axis=0) for g in srgs_by_class[cid]]
            model.proxy_vectors[cid] = np.mean(means, axis=0)


def _refresh_proxies(model: TrainedModel, srgs_by_class, cfg: TrainConfig) -> None:
    ab = cfg.ablations
    for cid in sorted(srgs_by_class):
        if ab.proxy_as_graph:
            model.proxies[cid] = update_proxies(model.proxies[cid], srgs_by_class[cid],
                                                cfg.sinkhorn, momentum=cfg.proxy_momentum)
        else:
            means = [g.node_features.mean(axis=0) for g in srgs_by_class[cid]]
            model.proxy_vectors[cid] = (cfg.proxy_momentum * model.proxy_vectors[cid]
                                        + (1.0 - cfg.proxy_momentum) * np.mean(means, axis=0))


def _forward_many(params: GatParams, graphs: list[ViewGraph], want_grad: bool,
                  workers: int):
    if workers <= 1 or len(graphs) <= 1:
        return [enc.forward(params, g, want_grad=want_grad) for g in graphs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(enc.forward, params, g, want_grad) for g in graphs]
        return [f.result() for f in futures]   # merged in submission order


def train(dataset: SynthDataset, cfg: TrainConfig,
          test_dataset: SynthDataset | None = None, workers: int = 1,
          checkpoint_path=None, log=None) -> tuple[TrainReport, TrainedModel]:
    """Deterministic per config+seed; raises NumericError if the loss diverges."""
    if len(dataset.class_ids) < 2:
        raise ConfigError("training needs at least two classes")
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    in_dim = dataset.config.feature_dim
    ab = cfg.ablations

    graphs = build_dataset(dataset, cfg.comp, uniform=not ab.use_complementarity_graph)
    labels = [inst.label for inst in dataset.instances]

    params = init_params(cfg.encoder, in_dim, seed=cfg.seed)
    head = CostHead(cfg.encoder.hidden_dim, cfg.cost_head_hidden, seed=cfg.seed + 1)
    model = TrainedModel(cfg, in_dim, params, head)

    opt = Adam(list(params.named_tensors()) + list(head.named_tensors()),
               weight_decay=cfg.weight_decay)

    epoch_losses = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(graphs))
        batch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_graphs = [graphs[i] for i in idx]
            batch_labels = [labels[i] for i in idx]

            results = _forward_many(params, batch_graphs, True, workers)
            tapes = [t for _, t in results]
            srgs = [g for g, _ in results]
            srgs_by_class: dict[int, list[ViewGraph]] = {}
            for g, lbl in zip(srgs, batch_labels):
                srgs_by_class.setdefault(int(lbl), []).append(g)

            _init_proxies_for(model, batch_labels, srgs_by_class, cfg)
            class_ids = model.class_ids()

            bound = head.bind(True)
            targets = ad.constant(_proxy_targets(model, class_ids))
            slots = batch_graphs[0].num_views
            rows = [_distance_row(model, tape.node_out, targets, slots, bound)
                    for tape in tapes]
            table = ad.concat([ad.reshape(r, (1, len(class_ids))) for r in rows], axis=0)
            loss_var = _anchor_loss_var(table, batch_labels, class_ids, cfg.anchor)
            if not np.isfinite(loss_var.value):
                raise NumericError(f"loss diverged at epoch {epoch}")
            batch_losses.append(float(loss_var.value))

            params.zero_grads()
            head.zero_grads()
            ad.backward(loss_var, np.asarray(1.0))
            for tape in tapes:
                for name, _ in params.named_tensors():
                    v = tape.param_vars[name]
                    if v.grad is not None:
                        params.grads[name] += v.grad
            bound.accumulate()
            opt.step({**params.grads, **head.grads}, lr)
            params.check_finite()

            _refresh_proxies(model, srgs_by_class, cfg)
        epoch_losses.append(float(np.mean(batch_losses)))
        if log is not None and (epoch % 20 == 0 or epoch == cfg.epochs - 1):
            log(f"epoch {epoch}: loss {epoch_losses[-1]:.6f} lr {lr:.6g}")

    train_acc = evaluate(model, dataset, workers=workers)
    test_acc = evaluate(model, test_dataset, workers=workers) if test_dataset else None
    report = TrainReport(epoch_losses, train_acc, test_acc,
                         time.perf_counter() - started)
    if checkpoint_path is not None:
        model.save(checkpoint_path)
        report.checkpoint_path = str(checkpoint_path)
    return report, model


def encode_dataset(model: TrainedModel, dataset: SynthDataset,
                   workers: int = 1) -> list[ViewGraph]:
    """Relevance graphs for every instance, in dataset order."""
    graphs = build_dataset(dataset, model.config.comp,
                           uniform=not model.config.ablations.use_complementarity_graph)
    return [g for g, _ in _forward_many(model.params, graphs, False, workers)]


def evaluate(model: TrainedModel, dataset: SynthDataset, workers: int = 1) -> float:
    """Fraction of instances whose nearest proxy matches their label."""
    srgs = encode_dataset(model, dataset, workers=workers)
    ids = model.class_ids()
    hits = 0
    for srg, inst in zip(srgs, dataset.instances):
        pred = ids[int(np.argmin(model.distances(srg)))]
        hits += int(pred == inst.label)
    return hits / len(dataset.instances)


def sweep_noise(base_cfg: TrainConfig, synth_cfg, eta_list, models,
                workers: int = 1, log=None) -> list[dict]:
    """Train the full model and the matching-ablation baseline per (model, eta)."""
    from .synth import SynthConfig, generate  # local to avoid cycle at import

    rows = []
    for model_name in models:
        for eta in eta_list:
            scfg = replace(synth_cfg, noise_rate=float(eta), noise_model=model_name)
            train_ds = generate(scfg)
            test_ds = generate(replace(scfg, seed=scfg.seed + 1))
            _, full = train(train_ds, base_cfg, workers=workers)
            acc = evaluate(full, test_ds, workers=workers)
            ab_cfg = replace(base_cfg,
                             ablations=replace(base_cfg.ablations,
                                               transitivity_recovery=False))
            _, ablated = train(train_ds, ab_cfg, workers=workers)
            acc_off = evaluate(ablated, test_ds, workers=workers)
            rows.append({"model": NoiseModelName(model_name), "eta": float(eta),
                         "accuracy": acc, "accuracy_tr_off": acc_off})
            if log is not None:
                log(f"{NoiseModelName(model_name)} eta={eta}: "
                    f"full {acc:.4f} vs matching-off {acc_off:.4f}")
    return rows


def NoiseModelName(model) -> str:
    return model.value if hasattr(model, "value") else str(model)


def noise_csv(rows: list[dict]) -> str:
    lines = ["model,eta,accuracy,accuracy_tr_off"]
    lines += [f"{r['model']},{r['eta']:.6g},{r['accuracy']:.6f},{r['accuracy_tr_off']:.6f}"
              for r in rows]
    return "\n".join(lines) + "\n"


def sweep_depth(base_cfg: TrainConfig, synth_cfg, depth_list,
                workers: int = 1, log=None) -> list[dict]:
    """Accuracy and output-node distinguishability per encoder depth."""
    from .synth import generate

    train_ds = generate(synth_cfg)
    test_ds = generate(replace(synth_cfg, seed=synth_cfg.seed + 1))
    rows = []
    for depth in depth_list:
        cfg = replace(base_cfg, encoder=replace(base_cfg.encoder, num_layers=int(depth)))
        _, model = train(train_ds, cfg, workers=workers)
        acc = evaluate(model, test_ds, workers=workers)
        srgs = encode_dataset(model, test_ds, workers=workers)
        dist = float(np.mean([enc.distinguishability(g.node_features) for g in srgs]))
        rows.append({"depth": int(depth), "accuracy": acc, "distinguishability": dist})
        if log is not None:
            log(f"depth {depth}: accuracy {acc:.4f} distinguishability {dist:.4f}")
    return rows


def depth_csv(rows: list[dict]) -> str:
    lines = ["depth,accuracy,distinguishability"]
    lines += [f"{r['depth']},{r['accuracy']:.6f},{r['distinguishability']:.6f}"
              for r in rows]
    return "\n".join(lines) + "\n"
