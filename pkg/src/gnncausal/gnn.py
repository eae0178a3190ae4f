"""Message-passing layers over a causal graph, with interventions.

A node aggregates messages from its parents and (optionally) itself.
Under an intervention the intervened nodes stop listening to their
parents; every other neighbourhood is left alone. Because the pruning is
applied to the adjacency, a layer under ``do(X)`` is literally the same
computation as a plain layer on the mutilated graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import numeric as T
from .numeric import ShapeError, Tensor
from .scm import Dag, Scm


@dataclass(frozen=True, eq=False)
class GraphSpec:
    """``adjacency[i, j] = 1`` means node j is a parent of node i."""

    adjacency: np.ndarray
    self_loops: bool = True
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.int8).copy()
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"adjacency must be square, got {a.shape}")
        np.fill_diagonal(a, 0)
        _check_acyclic(a)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.names is not None and len(self.names) != a.shape[0]:
            raise ShapeError(f"{len(self.names)} names for {a.shape[0]} nodes")

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def from_dag(cls, dag: Dag, self_loops: bool = True) -> "GraphSpec":
        return cls(dag.adjacency(), self_loops, tuple(dag.variables))

    @classmethod
    def from_scm(cls, scm: Scm, self_loops: bool = True) -> "GraphSpec":
        """The graph-constructed convention: the layer's graph is the SCM's graph."""
        return cls.from_dag(scm.dag, self_loops)

    def node_index(self, target) -> int:
        if isinstance(target, (int, np.integer)):
            if not 0 <= target < self.d:
                raise IndexError(f"node {target} out of range for {self.d} nodes")
            return int(target)
        if self.names is None or target not in self.names:
            raise KeyError(f"unknown node {target!r}")
        return self.names.index(target)

    def target_indices(self, targets: Iterable) -> frozenset[int]:
        return frozenset(self.node_index(t) for t in targets)

    def effective_adjacency(self, targets: Iterable = ()) -> np.ndarray:
        """Row i lists the intervened neighbourhood of node i."""
        a = self.adjacency.astype(np.float64)
        for t in self.target_indices(targets):
            a[t, :] = 0.0
        if self.self_loops:
            a = a + np.eye(self.d)
        return a

    def mutilated(self, targets: Iterable = ()) -> "GraphSpec":
        a = self.adjacency.copy()
        for t in self.target_indices(targets):
            a[t, :] = 0
        return GraphSpec(a, self.self_loops, self.names)

    def permuted(self, perm: Sequence[int]) -> "GraphSpec":
        """Relabel so new node k is old node ``perm[k]`` (P A P^T)."""
        perm = np.asarray(perm)
        names = None if self.names is None else tuple(self.names[k] for k in perm)
        return GraphSpec(self.adjacency[np.ix_(perm, perm)], self.self_loops, names)


def _check_acyclic(a: np.ndarray) -> None:
    remaining = set(range(a.shape[0]))
    while remaining:
        roots = [i for i in remaining if not any(a[i, j] for j in remaining)]
        if not roots:
            raise ValueError("adjacency contains a directed cycle")
        remaining.difference_update(roots)


def intervened_neighborhood(graph: GraphSpec, i, targets: Iterable = ()) -> set[int]:
    """Neighbourhood of node i, minus its parents when i is intervened."""
    row = graph.effective_adjacency(targets)[graph.node_index(i)]
    return {int(j) for j in np.flatnonzero(row)}


def mutilated_adjacency(graph: GraphSpec, targets: Iterable = ()) -> np.ndarray:
    """Parent adjacency (without self-loops) that an interventional layer actually uses."""
    eff = graph.effective_adjacency(targets)
    if graph.self_loops:
        eff = eff - np.eye(graph.d)
    return eff.astype(np.int8)


# layers

_ACTIVATIONS = {"tanh": T.tanh, "identity": lambda x: x, "sigmoid": T.sigmoid, "softplus": T.softplus}


@dataclass(eq=False)
class GnnLayerParams:
    """Shared message (psi) and update (phi) weights.

    ``h_i = act(d_i @ w_self + (sum_{j in M_i} msg(d_i, d_j)) @ w_agg + b_phi)``
    with ``msg = msg_act(d_j @ w_psi [+ d_i @ w_psi_self] + b_psi)``.
    """

    w_psi: Tensor
    b_psi: Tensor
    w_self: Tensor
    w_agg: Tensor
    b_phi: Tensor
    activation: str = "tanh"
    message_activation: str = "tanh"
    w_psi_self: Tensor | None = None

    def __post_init__(self):
        for tag in (self.activation, self.message_activation):
            if tag not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {tag!r}")

    @property
    def in_dim(self) -> int:
        return self.w_psi.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w_self.shape[1]

    @property
    def bivariate(self) -> bool:
        return self.w_psi_self is not None

    def parameters(self) -> list[Tensor]:
        ps = [self.w_psi, self.b_psi, self.w_self, self.w_agg, self.b_phi]
        return ps + ([self.w_psi_self] if self.w_psi_self is not None else [])

    def names(self) -> list[str]:
        ns = ["w_psi", "b_psi", "w_self", "w_agg", "b_phi"]
        return ns + (["w_psi_self"] if self.w_psi_self is not None else [])

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator, activation: str = "tanh",
             message_activation: str = "tanh", bivariate: bool = False, zero: bool = False,
             message_dim: int | None = None) -> "GnnLayerParams":
        m = message_dim or out_dim

        def glorot(fan_in, fan_out):
            if zero:
                return T.Tensor(np.zeros((fan_in, fan_out)), requires_grad=True)
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return T.Tensor(rng.uniform(-lim, lim, size=(fan_in, fan_out)), requires_grad=True)

        def zeros(n):
            return T.Tensor(np.zeros(n), requires_grad=True)

        # message weights stay random even for a zero-initialised output layer
        lim = np.sqrt(6.0 / (in_dim + m))
        w_psi = T.Tensor(rng.uniform(-lim, lim, size=(in_dim, m)), requires_grad=True)
        w_psi_self = None
        if bivariate:
            w_psi_self = T.Tensor(rng.uniform(-lim, lim, size=(in_dim, m)), requires_grad=True)
        return cls(w_psi, zeros(m), glorot(in_dim, out_dim), glorot(m, out_dim), zeros(out_dim),
                   activation, message_activation, w_psi_self)


def propagate(params: GnnLayerParams, features, adjacency) -> Tensor:
    """One layer given an explicit effective adjacency, (d, d) or (B, d, d)."""
    D = T.as_tensor(features)
    if D.ndim < 2 or D.shape[-1] != params.in_dim:
        raise ShapeError(f"layer expects features (..., d, {params.in_dim}), got {D.shape}")
    A = np.asarray(adjacency, dtype=np.float64)
    d = D.shape[-2]
    if A.shape[-2:] != (d, d):
        raise ShapeError(f"adjacency {A.shape} does not match {d} nodes in features {D.shape}")
    msg_act = _ACTIVATIONS[params.message_activation]
    if params.bivariate:
        pre_j = T.matmul(D, params.w_psi)
        pre_i = T.matmul(D, params.w_psi_self)
        lead = D.shape[:-2]
        m = params.w_psi.shape[1]
        pre = T.add(T.reshape(pre_j, lead + (1, d, m)), T.reshape(pre_i, lead + (d, 1, m)))
        msgs = msg_act(T.add(pre, params.b_psi))
        agg = T.sum(T.mul(msgs, A[..., None]), axis=-2)
    else:
        msgs = msg_act(T.add(T.matmul(D, params.w_psi), params.b_psi))
        agg = T.matmul(A, msgs)
    out = T.add(T.add(T.matmul(D, params.w_self), T.matmul(agg, params.w_agg)), params.b_phi)
    return _ACTIVATIONS[params.activation](out)


def layer_forward(params: GnnLayerParams, features, graph: GraphSpec, targets: Iterable = ()) -> Tensor:
    """Interventional layer: intervened nodes ignore their parents."""
    return propagate(params, features, graph.effective_adjacency(targets))


def stack_forward(layers: Sequence[GnnLayerParams], features, graph: GraphSpec,
                  targets: Iterable = ()) -> Tensor:
    adj = graph.effective_adjacency(targets)
    h = T.as_tensor(features)
    for layer in layers:
        h = propagate(layer, h, adj)
    return h


def init_stack(dims: Sequence[int], rng: np.random.Generator, hidden_activation: str = "tanh",
               output_activation: str = "identity", zero_output: bool = False,
               bivariate: bool = False) -> list[GnnLayerParams]:
    layers = []
    for k, (i, o) in enumerate(zip(dims[:-1], dims[1:])):
        last = k == len(dims) - 2
        layers.append(GnnLayerParams.init(
            i, o, rng,
            activation=output_activation if last else hidden_activation,
            bivariate=bivariate,
            zero=zero_output and last,
            message_dim=dims[k + 1] if not last else max(dims[k], o),
        ))
    return layers
