"""Interventional variational graph auto-encoder.

Encoder and decoder are interventional GNN stacks on the same causal
graph. Node features carry the node value (encoder) or latent sample
(decoder), an intervention mask bit, the clamped value of intervened
nodes and a one-hot node identity. Intervened nodes are excluded from
the reconstruction term.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import numeric as T
from .gnn import GnnLayerParams, GraphSpec, init_stack, propagate
from .numeric import NonFiniteError, ShapeError, Tensor
from .scm import Intervention, RegimeDataset, ScmError

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gnncausal.ivgae"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    latent_dim: int = 4
    hidden: int = 32
    node_ids: bool = True
    zero_init_output: bool = True
    bivariate: bool = False


@dataclass
class TrainConfig:
    steps: int = 6000
    batch_size: int = 64
    lr: float = 1e-3
    decay: float = 0.99
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 500
    eval_rows: int = 1000
    is_samples: int = 50
    nan_patience: int = 20
    keep_best: bool = True


class IvgaeModel:
    def __init__(self, graph: GraphSpec, config: ModelConfig | None = None, seed: int = 0,
                 encoder: list[GnnLayerParams] | None = None,
                 decoder: list[GnnLayerParams] | None = None):
        self.graph = graph
        self.config = config or ModelConfig()
        self.seed = seed
        cfg = self.config
        rng = np.random.default_rng(seed)
        extra = 2 + (graph.d if cfg.node_ids else 0)
        self.enc_in = 1 + extra
        self.dec_in = cfg.latent_dim + extra
        self.encoder = encoder or init_stack(
            [self.enc_in, cfg.hidden, 2 * cfg.latent_dim], rng,
            zero_output=cfg.zero_init_output, bivariate=cfg.bivariate)
        self.decoder = decoder or init_stack(
            [self.dec_in, cfg.hidden, 1], rng,
            zero_output=cfg.zero_init_output, bivariate=cfg.bivariate)
        self._parents = graph.adjacency.astype(np.float64)
        self._eye = np.eye(graph.d)
        self._ids = np.eye(graph.d)
        self.trained_regimes: list[str] | None = None

    @property
    def d(self) -> int:
        return self.graph.d

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def names(self) -> tuple[str, ...]:
        return self.graph.names or tuple(str(i) for i in range(self.d))

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.encoder + self.decoder for p in layer.parameters()]

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    # regime plumbing

    def mask_for(self, targets) -> np.ndarray:
        """Intervention mask (d,) from an Intervention or an iterable of node names/indices."""
        names = targets.names if isinstance(targets, Intervention) else tuple(targets)
        m = np.zeros(self.d)
        for t in names:
            m[self.graph.node_index(t)] = 1.0
        return m

    def adjacency_for(self, mask: np.ndarray) -> np.ndarray:
        """Per-sample effective adjacency: intervened rows lose their parents."""
        keep = 1.0 - mask
        adj = self._parents * keep[..., :, None]
        if self.graph.self_loops:
            adj = adj + self._eye
        return adj

    def _context(self, mask: np.ndarray, clamp: np.ndarray) -> np.ndarray:
        parts = [mask[..., None], clamp[..., None]]
        if self.config.node_ids:
            parts.append(np.broadcast_to(self._ids, mask.shape + (self.d,)))
        return np.concatenate(parts, axis=-1)

    # forward passes (tensors)

    def encode_tensors(self, values: np.ndarray, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        values = np.asarray(values, dtype=np.float64)
        mask = np.broadcast_to(mask, values.shape)
        feats = np.concatenate([values[..., None], self._context(mask, values * mask)], axis=-1)
        adj = self.adjacency_for(mask)
        h = T.Tensor(feats)
        for layer in self.encoder:
            h = propagate(layer, h, adj)
        L = self.latent_dim
        return h[..., :L], h[..., L:]

    def decode_tensors(self, z, mask: np.ndarray, clamp: np.ndarray) -> Tensor:
        z = T.as_tensor(z)
        if z.shape[-2:] != (self.d, self.latent_dim):
            raise ShapeError(f"latent sample must end in ({self.d}, {self.latent_dim}), got {z.shape}")
        lead = z.shape[:-2]
        mask = np.broadcast_to(mask, lead + (self.d,))
        clamp = np.broadcast_to(np.asarray(clamp, dtype=np.float64), lead + (self.d,)) * mask
        ctx = self._context(mask, clamp)
        h = T.concat([z, T.Tensor(ctx)], axis=-1)
        adj = self.adjacency_for(mask)
        for layer in self.decoder:
            h = propagate(layer, h, adj)
        return T.reshape(h, lead + (self.d,))

    # numpy conveniences

    def encode(self, values, targets=()) -> tuple[np.ndarray, np.ndarray]:
        """Variational parameters (mu, log_var), each shaped (..., d, latent_dim)."""
        v = np.asarray(values, dtype=np.float64)
        if v.shape[-1] != self.d:
            raise ShapeError(f"expected assignments over {self.d} nodes, got {v.shape}")
        _check_constant_targets(v, targets, self)
        mu, lv = self.encode_tensors(v, self.mask_for(targets))
        return mu.data, lv.data

    def decode(self, z, targets=(), clamp_values=None) -> np.ndarray:
        """Bernoulli logits (..., d) given latent samples and the intervention context."""
        z = np.asarray(z, dtype=np.float64)
        mask = self.mask_for(targets)
        clamp = np.zeros(self.d) if clamp_values is None else _clamp_vector(self, clamp_values)
        return self.decode_tensors(z, mask, clamp).data

    def reconstruction_mask(self, targets) -> np.ndarray:
        """1 for nodes whose likelihood enters the reconstruction term."""
        return 1.0 - self.mask_for(targets)

    # persistence

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, arrays: Sequence[np.ndarray]) -> None:
        for p, a in zip(self.parameters(), arrays, strict=True):
            if p.data.shape != a.shape:
                raise ShapeError(f"state shape {a.shape} does not match parameter {p.data.shape}")
            p.data = np.array(a, dtype=np.float64)

    def to_dict(self, train_config: TrainConfig | None = None, extra: dict | None = None) -> dict:
        def stack(layers):
            return [{
                "activation": l.activation,
                "message_activation": l.message_activation,
                "params": {n: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
                           for n, p in zip(l.names(), l.parameters())},
            } for l in layers]

        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "graph": {
                "names": list(self.names),
                "adjacency": self.graph.adjacency.tolist(),
                "self_loops": self.graph.self_loops,
            },
            "model_config": asdict(self.config),
            "train_config": asdict(train_config) if train_config else None,
            "seed": self.seed,
            "trained_regimes": self.trained_regimes,
            "encoder": stack(self.encoder),
            "decoder": stack(self.decoder),
            **(extra or {}),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IvgaeModel":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not an iVGAE checkpoint (format={doc.get('format')!r})")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
        g = doc["graph"]
        graph = GraphSpec(np.array(g["adjacency"]), g["self_loops"], tuple(g["names"]))

        def unstack(items):
            layers = []
            for item in items:
                ps = {n: T.Tensor(np.array(v["data"], dtype=np.float64).reshape(v["shape"]),
                                  requires_grad=True) for n, v in item["params"].items()}
                layers.append(GnnLayerParams(
                    ps["w_psi"], ps["b_psi"], ps["w_self"], ps["w_agg"], ps["b_phi"],
                    item["activation"], item["message_activation"], ps.get("w_psi_self")))
            return layers

        model = cls(graph, ModelConfig(**doc["model_config"]), doc.get("seed", 0),
                    unstack(doc["encoder"]), unstack(doc["decoder"]))
        model.trained_regimes = doc.get("trained_regimes")
        return model

    def save(self, path: str | Path, train_config: TrainConfig | None = None, extra: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(train_config, extra)))

    @classmethod
    def load(cls, path: str | Path) -> "IvgaeModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def copy(self) -> "IvgaeModel":
        return IvgaeModel.from_dict(self.to_dict())


def _clamp_vector(model: IvgaeModel, clamp_values) -> np.ndarray:
    if isinstance(clamp_values, dict):
        out = np.zeros(model.d)
        for k, v in clamp_values.items():
            out[model.graph.node_index(k)] = v
        return out
    return np.asarray(clamp_values, dtype=np.float64)


def _check_constant_targets(values: np.ndarray, targets, model: IvgaeModel) -> None:
    if not isinstance(targets, Intervention):
        return
    for name, rep in targets.targets:
        if hasattr(rep, "value") and (values[..., model.graph.node_index(name)] != rep.value).any():
            raise ScmError(f"assignment violates {name}={rep.value}")


# objective

@dataclass
class ElboTerms:
    elbo: Tensor          # per-sample, shape (B,)
    reconstruction: Tensor
    kl: Tensor
    clamp_hits: int


def elbo_terms(model: IvgaeModel, values: np.ndarray, mask: np.ndarray,
               rng: np.random.Generator | None = None, eps: np.ndarray | None = None) -> ElboTerms:
    """Per-sample causal ELBO with one reparameterised draw per datum."""
    values = np.asarray(values, dtype=np.float64)
    mask = np.broadcast_to(mask, values.shape)
    mu, log_var = model.encode_tensors(values, mask)
    z, _, hits = T.gaussian_reparam(mu, log_var, rng, eps=eps)
    logits = model.decode_tensors(z, mask, values)
    recon = T.bernoulli_log_lik(logits, values, weights=1.0 - mask, axis=-1)
    kl = T.sum(T.kl_diag_gaussian_std(mu, log_var, axis=-1), axis=-1)
    return ElboTerms(T.sub(recon, kl), recon, kl, hits)


def causal_elbo(model: IvgaeModel, batch: np.ndarray, regime: Intervention | Iterable = (),
                rng: np.random.Generator | int | None = None) -> Tensor:
    """Batch-mean causal ELBO for one regime; differentiable scalar."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    _check_constant_targets(batch, regime, model)
    terms = elbo_terms(model, batch, model.mask_for(regime), np.random.default_rng(rng))
    return T.mean(terms.elbo)


def elbo_per_sample(model: IvgaeModel, values: np.ndarray, regime, seed: int = 0,
                    chunk: int = 4096) -> np.ndarray:
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    rng = np.random.default_rng(seed)
    mask = model.mask_for(regime)
    out = [elbo_terms(model, values[s:s + chunk], mask, rng).elbo.data
           for s in range(0, len(values), chunk)]
    return np.concatenate(out) if out else np.zeros(0)


# training

@dataclass
class TrainTrace:
    regimes: list[str]
    step_elbo: np.ndarray                   # (steps, n_regimes)
    initial_elbo: float = float("nan")
    final: dict = field(default_factory=dict)
    per_regime: dict = field(default_factory=dict)
    valid_history: list = field(default_factory=list)
    best_step: int = 0
    nan_events: int = 0
    clamp_events: int = 0
    failed: bool = False

    def summary(self) -> dict:
        return {
            "regimes": self.regimes,
            "initial_elbo": self.initial_elbo,
            **self.final,
            "per_regime": self.per_regime,
            "best_step": self.best_step,
            "nan_events": self.nan_events,
            "clamp_events": self.clamp_events,
            "failed": self.failed,
        }


def evaluate(model: IvgaeModel, datasets: Sequence[RegimeDataset], split: str, seed: int,
             is_samples: int | None = None, max_rows: int | None = None) -> dict[str, float | list]:
    """Mean per-sample ELBO (and optionally importance-sampled log p) over regimes."""
    from .inference import log_likelihood_rows

    elbos, logps, gaps = [], [], []
    for k, ds in enumerate(datasets):
        rows = ds.split(split)
        if max_rows is not None:
            rows = rows[:max_rows]
        e = elbo_per_sample(model, rows, ds.regime, seed=seed + k)
        elbos.append(float(e.mean()))
        if is_samples:
            lp = log_likelihood_rows(model, rows, ds.regime, is_samples, seed=seed + 1000 + k)
            logps.append(float(lp.mean()))
            gaps.append(e - lp)
    out: dict = {"elbo": float(np.mean(elbos)), "elbo_by_regime": elbos}
    if is_samples:
        out["logp"] = float(np.mean(logps))
        out["logp_by_regime"] = logps
        # paired per-row ELBO - log p; both sides are Monte Carlo, so the sign of a
        # near-zero gap is only meaningful relative to its standard error
        K = len(gaps)
        out["bound_gap"] = float(np.mean([g.mean() for g in gaps]))
        out["bound_gap_se"] = float(np.sqrt(sum(g.var(ddof=1) / len(g) for g in gaps if len(g) > 1)) / K)
    return out


def train(model: IvgaeModel, datasets: Sequence[RegimeDataset], config: TrainConfig,
          evaluate_final: bool = True) -> tuple[IvgaeModel, TrainTrace]:
    """RMSProp on the summed negative causal ELBO, one batch per regime per step."""
    if not datasets:
        raise ValueError("training needs at least one regime dataset")
    names = model.names
    for ds in datasets:
        if tuple(ds.variables) != tuple(names):
            raise ShapeError(f"dataset variables {ds.variables} do not match model nodes {names}")
        _check_constant_targets(ds.samples, ds.regime, model)
    model.trained_regimes = sorted({ds.regime.label() for ds in datasets} | set(model.trained_regimes or ()))
    rng = np.random.default_rng(config.seed)
    opt = T.RMSProp(model.parameters(), lr=config.lr, decay=config.decay, eps=config.eps)
    params = opt.params
    R, B = len(datasets), config.batch_size
    trains = [ds.train.astype(np.float64) for ds in datasets]
    if any(len(t) == 0 for t in trains):
        raise ValueError("every regime needs a non-empty training split")
    masks = np.repeat(np.stack([model.mask_for(ds.regime) for ds in datasets]), B, axis=0)
    trace = TrainTrace([ds.regime.label() for ds in datasets], np.full((config.steps, R), np.nan))
    if config.steps:
        trace.initial_elbo = evaluate(model, datasets, "train", seed=config.seed, max_rows=config.eval_rows)["elbo"]
    best_valid, best_state = -np.inf, None
    streak = 0
    for step in range(config.steps):
        batch = np.concatenate([t[rng.integers(0, len(t), B)] for t in trains])
        eps = rng.standard_normal((R * B, model.d, model.latent_dim))
        try:
            terms = elbo_terms(model, batch, masks, eps=eps)
            loss = T.mul(T.sum(terms.elbo), -1.0 / B)
            grads = T.backward(loss, params)
            if not all(np.isfinite(g).all() for g in grads):
                raise NonFiniteError("non-finite gradient")
        except NonFiniteError as exc:
            trace.nan_events += 1
            streak += 1
            log.debug("step %d aborted: %s", step, exc)
            for p in params:
                p.grad = None
            if streak >= config.nan_patience:
                trace.failed = True
                log.warning("run failed after %d consecutive non-finite steps", streak)
                break
            continue
        streak = 0
        trace.clamp_events += terms.clamp_hits
        trace.step_elbo[step] = terms.elbo.data.reshape(R, B).mean(axis=1)
        opt.step(grads)
        for p in params:
            p.grad = None
        if config.keep_best and ((step + 1) % config.eval_every == 0 or step + 1 == config.steps):
            v = evaluate(model, datasets, "valid", seed=config.seed + 7, max_rows=config.eval_rows)["elbo"]
            trace.valid_history.append((step + 1, v))
            if v > best_valid:
                best_valid, best_state, trace.best_step = v, model.state(), step + 1
    if config.keep_best and best_state is not None:
        model.load_state(best_state)
    if evaluate_final and not trace.failed:
        _final_metrics(model, datasets, config, trace)
    return model, trace


def _final_metrics(model, datasets, config, trace) -> None:
    seed = config.seed + 101
    tr = evaluate(model, datasets, "train", seed)
    va = evaluate(model, datasets, "valid", seed, is_samples=config.is_samples)
    te = evaluate(model, datasets, "test", seed, is_samples=config.is_samples)
    trace.final = {
        "train_elbo": tr["elbo"], "valid_elbo": va["elbo"], "test_elbo": te["elbo"],
        "valid_logp": va["logp"], "test_logp": te["logp"],
        "valid_bound_gap": va["bound_gap"], "valid_bound_gap_se": va["bound_gap_se"],
        "test_bound_gap": te["bound_gap"], "test_bound_gap_se": te["bound_gap_se"],
    }
    trace.per_regime = {
        label: {
            "train_elbo": tr["elbo_by_regime"][k], "valid_elbo": va["elbo_by_regime"][k],
            "test_elbo": te["elbo_by_regime"][k], "valid_logp": va["logp_by_regime"][k],
            "test_logp": te["logp_by_regime"][k],
        }
        for k, label in enumerate(trace.regimes)
    }
