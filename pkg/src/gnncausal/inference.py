"""Causal queries against a trained iVGAE.

Marginal probabilities under an intervention are importance-sampled
with the encoder as proposal. Weights default to
``p(v | z) p(z) / q(z | v)``; ``alg1_literal=True`` drops the prior
factor. Marginals over a subset of nodes sum the full-assignment
estimates over every completion while the number of free nodes is
small, and fall back to ancestral sampling from the prior otherwise.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import numeric as T
from .numeric import std_normal_log_density
from .scm import (
    BernoulliCoin,
    Constant,
    Intervention,
    Scm,
    ScmError,
    all_assignments,
    assignment_index,
    exact_ate,
    exact_joint,
)

DEFAULT_SAMPLES = 50
EXACT_SUM_MAX_FREE = 12


class InferenceError(ValueError):
    pass


def _logmeanexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (np.log(np.mean(np.exp(a - m), axis=axis, keepdims=True)) + m).squeeze(axis)


def _log_stderr(log_w: np.ndarray, axis: int = -1) -> np.ndarray:
    """Delta-method standard error of log(mean w): sd(w) / (sqrt(n) mean(w))."""
    n = log_w.shape[axis]
    w = np.exp(log_w - np.max(log_w, axis=axis, keepdims=True))
    mean = w.mean(axis=axis)
    sd = w.std(axis=axis, ddof=1) if n > 1 else np.zeros_like(mean)
    return sd / (math.sqrt(n) * mean)


# generic estimator

def importance_sample(log_lik: Callable[[np.ndarray], np.ndarray], mu, log_var, n: int,
                      rng: np.random.Generator | int | None = None, include_prior: bool = True):
    """Estimate log p(x) with a diagonal-Gaussian proposal and a standard-normal prior.

    ``log_lik`` maps latent samples (n, k) to log p(x | z) of shape (n,).
    Returns ``(log_estimate, stderr, log_weights)``.
    """
    if n < 1:
        raise InferenceError("importance sampling needs n >= 1")
    rng = np.random.default_rng(rng)
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    lv = np.clip(np.broadcast_to(np.asarray(log_var, dtype=np.float64), mu.shape), T.LOG_VAR_MIN, T.LOG_VAR_MAX)
    eps = rng.standard_normal((n,) + mu.shape)
    z = mu + np.exp(0.5 * lv) * eps
    log_q = -0.5 * np.sum(T.distributions.LOG_2PI + lv + eps * eps, axis=tuple(range(1, eps.ndim)))
    log_w = np.asarray(log_lik(z), dtype=np.float64) - log_q
    if include_prior:
        log_w = log_w + std_normal_log_density(z.reshape(n, -1))
    if not np.isfinite(log_w).all():
        bad = int((~np.isfinite(log_w)).sum())
        raise InferenceError(f"{bad} of {n} importance weights are non-finite")
    return float(_logmeanexp(log_w)), float(_log_stderr(log_w)), log_w


# model-level estimator

def _regime_mask(model, regime) -> np.ndarray:
    return model.mask_for(regime)


def log_weights_rows(model, rows: np.ndarray, regime, n: int, seed: int | np.random.Generator = 0,
                     include_prior: bool = True, chunk_rows: int | None = None) -> np.ndarray:
    """Log importance weights (rows, n) for log p(v_unintervened | do(...)) per row."""
    if n < 1:
        raise InferenceError("importance sampling needs n >= 1")
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    rng = np.random.default_rng(seed)
    mask = _regime_mask(model, regime)
    d, L = model.d, model.latent_dim
    chunk_rows = chunk_rows or max(1, 8192 // n)
    out = []
    for s in range(0, len(rows), chunk_rows):
        v = rows[s:s + chunk_rows]
        m = np.broadcast_to(mask, v.shape)
        mu, lv = model.encode_tensors(v, m)
        mu, lv = mu.data, np.clip(lv.data, T.LOG_VAR_MIN, T.LOG_VAR_MAX)
        eps = rng.standard_normal((len(v), n, d, L))
        z = mu[:, None] + np.exp(0.5 * lv)[:, None] * eps
        log_q = -0.5 * np.sum(T.distributions.LOG_2PI + lv[:, None] + eps * eps, axis=(-1, -2))
        vv = np.repeat(v, n, axis=0)
        logits = np.asarray(_data(model.decode_tensors(z.reshape(-1, d, L),
                                                       np.broadcast_to(mask, vv.shape), vv)))
        ll = ((vv * logits - np.logaddexp(0.0, logits)) * (1.0 - mask)).sum(axis=-1).reshape(len(v), n)
        lw = ll - log_q
        if include_prior:
            lw = lw + std_normal_log_density(z.reshape(len(v), n, d * L))
        out.append(lw)
    lw = np.concatenate(out, axis=0)
    if not np.isfinite(lw).all():
        raise InferenceError(f"non-finite importance weights for {int((~np.isfinite(lw)).any(axis=1).sum())} rows")
    return lw


def _data(x):
    return x.data if isinstance(x, T.Tensor) else x


def log_likelihood_rows(model, rows, regime, n: int = DEFAULT_SAMPLES, seed: int = 0,
                        include_prior: bool = True) -> np.ndarray:
    """Importance-sampled log p(v | do(...)) per row, intervened nodes excluded."""
    return _logmeanexp(log_weights_rows(model, rows, regime, n, seed, include_prior))


@dataclass
class QueryResult:
    query: dict
    regime: str
    log_prob: float
    n: int
    stderr: float
    seed: int = 0
    method: str = "enumerate"

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)

    def to_record(self) -> dict:
        return {"query": self.query, "regime": self.regime, "estimate": self.log_prob,
                "prob": self.prob, "stderr": self.stderr, "n": self.n, "seed": self.seed,
                "method": self.method}


def _completions(model, assignment: Mapping[str, int], regime: Intervention):
    """Full assignments extending ``assignment``, with log-weights of coin targets."""
    names = list(model.names)
    reps = regime.as_dict() if isinstance(regime, Intervention) else {}
    fixed = {}
    for k, v in assignment.items():
        if k not in names:
            raise InferenceError(f"unknown variable {k!r}")
        if v not in (0, 1):
            raise InferenceError(f"query value for {k!r} must be 0 or 1")
        rep = reps.get(k)
        if isinstance(rep, Constant) and rep.value != v:
            raise InferenceError(f"query {k}={v} contradicts intervention {k}={rep.value}")
        fixed[k] = v
    for k, rep in reps.items():
        if isinstance(rep, Constant):
            fixed[k] = rep.value
    free = [k for k in names if k not in fixed]
    grid = all_assignments(len(free)) if free else np.zeros((1, 0), dtype=np.int8)
    rows = np.zeros((len(grid), len(names)))
    for k, v in fixed.items():
        rows[:, names.index(k)] = v
    for c, k in enumerate(free):
        rows[:, names.index(k)] = grid[:, c]
    log_rep = np.zeros(len(rows))
    for k, rep in reps.items():
        if isinstance(rep, BernoulliCoin):
            col = rows[:, names.index(k)]
            with np.errstate(divide="ignore"):
                log_rep += np.where(col == 1, np.log(rep.q), np.log1p(-rep.q))
    return rows, log_rep, free


def _as_regime(regime) -> Intervention:
    if isinstance(regime, Intervention):
        return regime
    if isinstance(regime, str) or regime is None:
        return Intervention.parse(regime)
    return Intervention.of(dict(regime))


def marginal_log_prob(model, assignment: Mapping[str, int], regime=Intervention(), n: int = DEFAULT_SAMPLES,
                      seed: int = 0, alg1_literal: bool = False) -> QueryResult:
    """log p(assignment | do(regime)) for a full or partial assignment."""
    if n < 1:
        raise InferenceError("importance sampling needs n >= 1")
    regime = _as_regime(regime)
    n_free = model.d - len(set(assignment) | set(regime.names))
    if n_free > EXACT_SUM_MAX_FREE:
        return _prior_marginal(model, assignment, regime, n, seed)
    rows, log_rep, _ = _completions(model, assignment, regime)
    ok = np.isfinite(log_rep)
    if not ok.any():
        return QueryResult(dict(assignment), regime.label(), -math.inf, n, 0.0, seed)
    lw = log_weights_rows(model, rows[ok], regime, n, seed, include_prior=not alg1_literal)
    lw = lw + log_rep[ok][:, None]
    per_row = _logmeanexp(lw)
    total = float(np.logaddexp.reduce(per_row))
    w = np.exp(lw - total)
    var = (w.var(axis=1, ddof=1) / n).sum() if n > 1 else 0.0
    return QueryResult(dict(assignment), regime.label(), total, n, float(math.sqrt(var)), seed)


def _prior_marginal(model, assignment, regime, n, seed) -> QueryResult:
    rng = np.random.default_rng(seed)
    names = list(model.names)
    mask = model.mask_for(regime)
    reps = regime.as_dict()
    coins = [k for k, r in reps.items() if isinstance(r, BernoulliCoin)]
    z = rng.standard_normal((n, model.d, model.latent_dim))
    clamp = np.zeros((n, model.d))
    for k, r in reps.items():
        i = names.index(k)
        clamp[:, i] = assignment.get(k, r.value) if isinstance(r, Constant) else (
            assignment[k] if k in assignment else (rng.random(n) < r.q))
    logits = np.asarray(_data(model.decode_tensors(z, np.broadcast_to(mask, (n, model.d)), clamp)))
    logp = np.zeros(n)
    for k, v in assignment.items():
        i = names.index(k)
        if k in reps:
            continue
        logp += v * logits[:, i] - np.logaddexp(0.0, logits[:, i])
    for k in coins:
        if k in assignment:
            q = reps[k].q
            logp += math.log(q) if assignment[k] == 1 else math.log1p(-q)
    est = float(_logmeanexp(logp))
    return QueryResult(dict(assignment), regime.label(), est, n, float(_log_stderr(logp)), seed, "prior")


def joint_estimate(model, regime=Intervention(), n: int = DEFAULT_SAMPLES, seed: int = 0,
                   alg1_literal: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Estimated p(v | do) for every full assignment consistent with the regime.

    Returns ``(rows, probs)``; ``probs`` is not renormalised.
    """
    regime = _as_regime(regime)
    rows, log_rep, _ = _completions(model, {}, regime)
    lw = log_weights_rows(model, rows, regime, n, seed, include_prior=not alg1_literal)
    with np.errstate(under="ignore"):
        probs = np.exp(_logmeanexp(lw) + log_rep)
    return rows, probs


def marginals(model, regime=Intervention(), n: int = DEFAULT_SAMPLES, seed: int = 0,
              alg1_literal: bool = False) -> dict[str, float]:
    """Per-node P(V = 1 | do) from the model.

    The model does not describe intervened nodes, so the estimate is
    normalised separately for each value of the coin targets and then
    weighted by the coins' own distribution.
    """
    regime = _as_regime(regime)
    n_free = model.d - len(regime.names)
    if n_free > EXACT_SUM_MAX_FREE:
        return {k: _prior_marginal(model, {k: 1}, regime, n, seed + i).prob
                for i, k in enumerate(model.names)}
    rows, probs = joint_estimate(model, regime, n, seed, alg1_literal)
    names = list(model.names)
    coins = [(names.index(k), r.q) for k, r in regime.targets if isinstance(r, BernoulliCoin)]
    if coins:
        cols = [i for i, _ in coins]
        key = assignment_index(rows[:, cols]) if cols else np.zeros(len(rows), dtype=np.int64)
        group = np.bincount(key, weights=probs)
        with np.errstate(divide="ignore", invalid="ignore"):
            probs = np.where(group[key] > 0, probs / group[key], 0.0)
        for i, q in coins:
            probs = probs * np.where(rows[:, i] == 1, q, 1.0 - q)
    probs = probs / probs.sum()
    return {k: float(probs @ rows[:, i]) for i, k in enumerate(model.names)}


def estimate_ate(model, x: str, y: str, n: int = DEFAULT_SAMPLES, seed: int = 0,
                 alg1_literal: bool = False) -> float:
    """P(Y=1 | do(X=1)) - P(Y=1 | do(X=0)) from the model."""
    if x == y:
        raise InferenceError("treatment and outcome must differ")
    trained = getattr(model, "trained_regimes", None)
    if trained is not None:
        for val in (0, 1):
            if f"{x}={val}" not in trained:
                raise InferenceError(f"model was not trained on regime do({x}={val}); has {sorted(trained)}")
    out = []
    for val in (0, 1):
        regime = Intervention.of({x: val})
        hi = marginal_log_prob(model, {y: 1}, regime, n, seed + 2 * val, alg1_literal).log_prob
        lo = marginal_log_prob(model, {y: 0}, regime, n, seed + 2 * val + 1, alg1_literal).log_prob
        out.append(1.0 / (1.0 + math.exp(lo - hi)))
    return out[1] - out[0]


@dataclass
class DensityReport:
    regime: str
    nodes: list[str]
    model_p1: list[float]
    oracle_p1: list[float]
    abs_error: list[float]

    def max_error(self, exclude: tuple[str, ...] = ()) -> float:
        return max((e for k, e in zip(self.nodes, self.abs_error) if k not in exclude), default=0.0)

    def rows(self) -> list[dict]:
        return [{"node": k, "model_p1": m, "oracle_p1": o, "abs_error": e}
                for k, m, o, e in zip(self.nodes, self.model_p1, self.oracle_p1, self.abs_error)]

    def write_csv(self, path: str | Path, extra: dict | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            fields = list(extra or {}) + ["regime", "node", "model_p1", "oracle_p1", "abs_error"]
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            for r in self.rows():
                w.writerow({**(extra or {}), "regime": self.regime, **r})


def density_table(model, scm: Scm, regime=Intervention(), n: int = DEFAULT_SAMPLES, seed: int = 0,
                  alg1_literal: bool = False) -> DensityReport:
    """Per-node model marginals next to the exact oracle marginals."""
    regime = _as_regime(regime)
    if tuple(scm.variables) != tuple(model.names):
        raise InferenceError(f"model nodes {model.names} do not match SCM variables {scm.variables}")
    est = marginals(model, regime, n, seed, alg1_literal)
    oracle = exact_joint(scm, regime).marginals()
    nodes = list(scm.variables)
    m = [est[k] for k in nodes]
    o = [oracle[k] for k in nodes]
    return DensityReport(regime.label(), nodes, m, o, [abs(a - b) for a, b in zip(m, o)])


# oracle plug-in

class PluginModel:
    """Model-shaped stand-in whose decoder logits are the exact interventional
    marginals of an SCM and whose encoder returns the prior (mu = 0, log_var = 0).

    With a z-independent decoder and the prior as proposal every importance
    weight equals the factorised probability, so query estimates are exact
    for per-node marginals.
    """

    LOGIT_CLIP = 50.0

    def __init__(self, scm: Scm, latent_dim: int = 1, trained_regimes=None):
        from .gnn import GraphSpec

        self.scm = scm
        self.graph = GraphSpec.from_scm(scm)
        self.latent_dim = latent_dim
        self.trained_regimes = trained_regimes
        self._cache: dict[tuple, np.ndarray] = {}

    @property
    def d(self) -> int:
        return self.scm.d

    @property
    def names(self) -> tuple[str, ...]:
        return self.scm.variables

    def mask_for(self, targets) -> np.ndarray:
        names = targets.names if isinstance(targets, Intervention) else tuple(targets)
        m = np.zeros(self.d)
        for t in names:
            m[self.scm.index(t)] = 1.0
        return m

    def encode_tensors(self, values, mask):
        shape = np.shape(values) + (self.latent_dim,)
        return T.Tensor(np.zeros(shape)), T.Tensor(np.zeros(shape))

    def _logits(self, key: tuple) -> np.ndarray:
        if key not in self._cache:
            iv = Intervention.of({self.scm.variables[i]: int(v) for i, v in key})
            p = np.clip([exact_joint(self.scm, iv).marginal(k) for k in self.scm.variables], 0.0, 1.0)
            with np.errstate(divide="ignore"):
                logit = np.log(p) - np.log1p(-p)
            self._cache[key] = np.clip(logit, -self.LOGIT_CLIP, self.LOGIT_CLIP)
        return self._cache[key]

    def decode_tensors(self, z, mask, clamp):
        z = T.as_tensor(z)
        lead = z.shape[:-2]
        mask = np.broadcast_to(mask, lead + (self.d,)).reshape(-1, self.d)
        clamp = np.broadcast_to(clamp, lead + (self.d,)).reshape(-1, self.d)
        out = np.empty_like(mask, dtype=np.float64)
        keys = [tuple((i, int(c[i])) for i in np.flatnonzero(m)) for m, c in zip(mask, clamp)]
        for r, key in enumerate(keys):
            out[r] = self._logits(key)
        return T.Tensor(out.reshape(lead + (self.d,)))


def write_records(path: str | Path, records: list[dict]) -> None:
    Path(path).write_text(json.dumps(records, indent=2) + "\n")
