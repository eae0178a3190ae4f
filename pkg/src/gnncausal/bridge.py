"""Constructive GNN <-> SCM conversion on small boolean SCMs.

Every structural equation is split into univariate parent terms plus a
remainder that joins the noise with whichever parents it still needs:

    f_i(pa, u) = r_i(u, A_i) + sum_j f_ij(v_j)

Parent terms are anchored with the other parents at 0 and the noise at
its top state. A single shared message function and update function then
reproduce every equation by dispatching on node identity tags carried in
the node features.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .scm import Scm, ScmError

MAX_DECOMPOSE_PARENTS = 8
MAX_VERIFY_INPUTS = 20


@dataclass(frozen=True)
class Decomposition:
    variable: str
    parents: tuple[str, ...]
    edge_terms: Mapping[str, np.ndarray]   # parent -> [f_ij(0), f_ij(1)]
    args: tuple[str, ...]                  # A_i: parents the remainder depends on
    remainder: np.ndarray                  # indexed by (values of args..., noise state)

    def remainder_at(self, parent_values: Mapping[str, int], u: int):
        return self.remainder[tuple(int(parent_values[a]) for a in self.args) + (int(u),)]

    def evaluate(self, parent_values: Mapping[str, int], u: int):
        return self.remainder_at(parent_values, u) + sum(
            self.edge_terms[p][int(parent_values[p])] for p in self.parents)


def decompose_table(variable: str, parents: Sequence[str], table: np.ndarray) -> Decomposition:
    """Split a table indexed by (parents..., noise state) into edge terms and a remainder."""
    table = np.asarray(table)
    k = len(parents)
    if k > MAX_DECOMPOSE_PARENTS:
        raise ScmError(f"{variable!r} has {k} parents; decomposition handles at most {MAX_DECOMPOSE_PARENTS}")
    if table.shape[:k] != (2,) * k or table.ndim != k + 1:
        raise ScmError(f"table for {variable!r} has shape {table.shape}, expected (2,)*{k} + (states,)")
    top = table.shape[-1] - 1
    anchor = (0,) * k + (top,)
    base = table[anchor]
    edge_terms = {}
    for j, p in enumerate(parents):
        one = list(anchor)
        one[j] = 1
        edge_terms[p] = np.array([0, table[tuple(one)] - base], dtype=table.dtype)
    rem = table.astype(np.int64 if np.issubdtype(table.dtype, np.integer) else np.float64).copy()
    for j, p in enumerate(parents):
        shape = [1] * (k + 1)
        shape[j] = 2
        rem = rem - edge_terms[p].reshape(shape)
    args = tuple(p for j, p in enumerate(parents)
                 if not np.array_equal(np.take(rem, 0, axis=j), np.take(rem, 1, axis=j)))
    keep = [j for j, p in enumerate(parents) if p in args]
    idx = tuple(slice(None) if j in keep else 0 for j in range(k)) + (slice(None),)
    return Decomposition(variable, tuple(parents), edge_terms, args, rem[idx])


def decompose(scm: Scm, variable: str) -> Decomposition:
    scm.index(variable)
    return decompose_table(variable, scm.parents[variable], scm.mechanisms[variable].astype(np.int64))


# the constructed shared-function GNN

@dataclass
class ConstructedGnn:
    """Shared message/update functions realised as tag-dispatched tables.

    Node features are ``(tag, value, noise)``. A message from j to i is
    ``(f_ij(v_j), {j: v_j})``: the scalar edge term plus the sender's value
    in its own identity slot. Messages are sum-aggregated and the update
    adds the remainder, looked up from the slots named by ``A_i``.
    """

    variables: tuple[str, ...]
    parents: Mapping[str, tuple[str, ...]]
    psi_table: dict[tuple[str, str], np.ndarray]
    phi_table: dict[str, tuple[tuple[str, ...], np.ndarray]]

    def features(self, values: Mapping[str, int], noise: Mapping[str, int]) -> dict[str, tuple]:
        """Feature space V ∪ U with an identity tag per node."""
        return {v: (v, int(values.get(v, 0)), int(noise.get(v, 0))) for v in self.variables}

    def psi(self, d_i: tuple, d_j: tuple) -> tuple:
        (tag_i, _, _), (tag_j, v_j, _) = d_i, d_j
        return self.psi_table[(tag_i, tag_j)][v_j], {tag_j: v_j}

    @staticmethod
    def aggregate(messages) -> tuple:
        total, slots = 0, {}
        for scalar, slot in messages:
            total += scalar
            for k, v in slot.items():
                slots[k] = slots.get(k, 0) + v
        return total, slots

    def phi(self, d_i: tuple, agg: tuple):
        tag_i, _, u_i = d_i
        total, slots = agg
        args, rem = self.phi_table[tag_i]
        return rem[tuple(slots.get(a, 0) for a in args) + (u_i,)] + total

    def node_output(self, i: str, feats: Mapping[str, tuple]):
        d_i = feats[i]
        return self.phi(d_i, self.aggregate(self.psi(d_i, feats[j]) for j in self.parents[i]))

    def forward(self, values: Mapping[str, int], noise: Mapping[str, int]) -> dict[str, int]:
        feats = self.features(values, noise)
        return {i: self.node_output(i, feats) for i in self.variables}


def construct_gnn_from_scm(scm: Scm) -> ConstructedGnn:
    psi, phi = {}, {}
    for v in scm.variables:
        dec = decompose(scm, v)
        for p in dec.parents:
            psi[(v, p)] = dec.edge_terms[p].copy()
        phi[v] = (dec.args, dec.remainder.copy())
    return ConstructedGnn(scm.variables, dict(scm.parents), psi, phi)


@dataclass
class ConversionCheck:
    ok: bool
    counterexample: dict | None = None
    checked: int = 0

    def __bool__(self) -> bool:
        return self.ok


def verify_conversion(scm: Scm, constructed: ConstructedGnn) -> ConversionCheck:
    """Exhaustively compare the constructed layer with every structural equation."""
    checked = 0
    for v in scm.variables:
        pa = scm.parents[v]
        n_states = scm.mechanisms[v].shape[-1]
        if len(pa) + int(np.ceil(np.log2(max(n_states, 2)))) > MAX_VERIFY_INPUTS:
            raise ScmError(f"{v!r} has too many inputs for exhaustive verification")
        for vals in itertools.product((0, 1), repeat=len(pa)):
            for u in range(n_states):
                values = dict(zip(pa, vals))
                feats = constructed.features(values, {v: u})
                got = constructed.node_output(v, feats)
                want = int(scm.mechanisms[v][vals + (u,)])
                checked += 1
                if got != want:
                    return ConversionCheck(False, {
                        "variable": v, "parents": values, "noise": u,
                        "expected": want, "got": got.item() if hasattr(got, "item") else got,
                    }, checked)
    return ConversionCheck(True, None, checked)


# NCM-Type 2: non-shared edge terms with a sum aggregator

@dataclass
class NcmType2:
    variables: tuple[str, ...]
    parents: Mapping[str, tuple[str, ...]]
    edge_terms: dict[tuple[str, str], np.ndarray]          # (j, i) -> table over v_j
    noise_terms: dict[str, tuple[tuple[str, ...], np.ndarray]]
    noise: Mapping[str, np.ndarray] = field(default_factory=dict)

    def node(self, i: str, values: Mapping[str, int], u: int):
        args, table = self.noise_terms[i]
        out = table[tuple(int(values[a]) for a in args) + (int(u),)]
        for j in self.parents[i]:
            out = out + self.edge_terms[(j, i)][int(values[j])]
        return out

    def simulate(self, noise: Mapping[str, int]) -> dict[str, int]:
        """Evaluate nodes in topological order from a noise configuration."""
        from .scm import Dag

        values: dict[str, int] = {}
        for v in Dag(self.variables, self.parents).topological_order():
            values[v] = int(self.node(v, values, noise[v]))
        return values


def ncm_type2_from_scm(scm: Scm) -> NcmType2:
    edges, terms = {}, {}
    for v in scm.variables:
        dec = decompose(scm, v)
        for p in dec.parents:
            edges[(p, v)] = dec.edge_terms[p].copy()
        terms[v] = (dec.args, dec.remainder.copy())
    return NcmType2(scm.variables, dict(scm.parents), edges, terms, dict(scm.noise))


def ncm_type2_forward(model: NcmType2, values: Mapping[str, int], noise: Mapping[str, int]) -> dict[str, int]:
    """One layer: each node sums its parent edge terms and its noise-joining term."""
    return {i: model.node(i, values, noise.get(i, 0)) for i in model.variables}


def ncm_type2_to_scm(model: NcmType2, name: str = "ncm2") -> Scm:
    """Tabulate the NCM back into mechanism tables (outputs must stay in {0, 1})."""
    mechs = {}
    for v in model.variables:
        pa = model.parents[v]
        states = len(model.noise[v])
        table = np.zeros((2,) * len(pa) + (states,), dtype=np.int64)
        for vals in itertools.product((0, 1), repeat=len(pa)):
            for u in range(states):
                table[vals + (u,)] = model.node(v, dict(zip(pa, vals)), u)
        mechs[v] = table
    return Scm(model.variables, model.parents, mechs, model.noise, name)
