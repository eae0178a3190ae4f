"""Binary Markovian structural causal models and their exact oracle.

An :class:`Scm` stores, per variable, a mechanism table indexed by
``(parent values..., noise state)`` and a categorical distribution over
its exogenous noise states. Builtin models use binary Bernoulli noise;
Bayesian networks loaded from CPTs get one discretised uniform coin per
variable, so a variable may have more than two noise states.
"""
from __future__ import annotations

import csv
import itertools
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_ENUM_VARIABLES = 20
MAX_NOISE_CONFIGS = 1 << 22
SPLIT_FRACTIONS = (0.8, 0.1, 0.1)


class ScmError(ValueError):
    pass


class EnumerationTooLarge(ScmError):
    pass


# interventions

@dataclass(frozen=True)
class Constant:
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ScmError(f"constant intervention value must be 0 or 1, got {self.value}")

    def prob_one(self) -> float:
        return float(self.value)

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class BernoulliCoin:
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ScmError(f"coin probability must lie in [0, 1], got {self.q}")

    def prob_one(self) -> float:
        return float(self.q)

    def __str__(self) -> str:
        return f"coin{self.q:g}"


Replacement = Constant | BernoulliCoin
_TARGET_RE = re.compile(r"^\s*([^=\s]+)\s*=\s*(0|1|coin(?:\s*)([0-9.eE+-]+))\s*$")


@dataclass(frozen=True)
class Intervention:
    """A set of (variable, replacement) pairs; empty means do(∅)."""

    targets: tuple[tuple[str, Replacement], ...] = ()

    def __post_init__(self):
        names = [n for n, _ in self.targets]
        if len(set(names)) != len(names):
            raise ScmError(f"duplicate intervention targets: {names}")
        object.__setattr__(self, "targets", tuple(sorted(self.targets, key=lambda t: t[0])))

    @classmethod
    def of(cls, mapping: Mapping[str, Replacement | int | float | str] | None = None) -> "Intervention":
        items = []
        for name, rep in (mapping or {}).items():
            if isinstance(rep, (Constant, BernoulliCoin)):
                items.append((name, rep))
            elif isinstance(rep, str):
                items.append(cls.parse(f"{name}={rep}").targets[0])
            else:
                items.append((name, Constant(int(rep))))
        return cls(tuple(items))

    @classmethod
    def parse(cls, text: str | None) -> "Intervention":
        """Parse ``"X=1,tub=coin0.5"``; empty, ``none`` and ``obs`` give do(∅)."""
        if text is None:
            return cls()
        text = text.strip()
        if text.startswith("do(") and text.endswith(")"):
            text = text[3:-1]
        if text.lower() in ("", "none", "obs", "∅"):
            return cls()
        items = []
        for part in text.split(","):
            m = _TARGET_RE.match(part)
            if not m:
                raise ScmError(f"cannot parse intervention target {part!r}")
            name, rhs, q = m.groups()
            items.append((name, BernoulliCoin(float(q)) if q is not None else Constant(int(rhs))))
        return cls(tuple(items))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.targets)

    def as_dict(self) -> dict[str, Replacement]:
        return dict(self.targets)

    def is_empty(self) -> bool:
        return not self.targets

    def label(self) -> str:
        return ",".join(f"{n}={r}" for n, r in self.targets) or "obs"

    def __str__(self) -> str:
        return f"do({','.join(f'{n}={r}' for n, r in self.targets)})"


# graphs

@dataclass(frozen=True)
class Dag:
    variables: tuple[str, ...]
    parents: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(self, "parents", {v: tuple(self.parents.get(v, ())) for v in self.variables})
        known = set(self.variables)
        for v, ps in self.parents.items():
            for p in ps:
                if p not in known:
                    raise ScmError(f"parent {p!r} of {v!r} is not a variable")
        self.topological_order()

    def edges(self) -> set[tuple[str, str]]:
        return {(p, v) for v, ps in self.parents.items() for p in ps}

    def adjacency(self) -> np.ndarray:
        """Entry (i, j) is 1 when variable j is a parent of variable i."""
        idx = {v: i for i, v in enumerate(self.variables)}
        a = np.zeros((len(self.variables),) * 2, dtype=np.int8)
        for v, ps in self.parents.items():
            for p in ps:
                a[idx[v], idx[p]] = 1
        return a

    def topological_order(self) -> list[str]:
        remaining = {v: set(ps) for v, ps in self.parents.items()}
        order: list[str] = []
        while remaining:
            ready = [v for v in self.variables if v in remaining and not remaining[v]]
            if not ready:
                raise ScmError(f"graph has a cycle among {sorted(remaining)}")
            for v in ready:
                order.append(v)
                del remaining[v]
            for ps in remaining.values():
                ps.difference_update(ready)
        return order

    def descendants(self, v: str) -> set[str]:
        children: dict[str, list[str]] = {u: [] for u in self.variables}
        for c, ps in self.parents.items():
            for p in ps:
                children[p].append(c)
        out, stack = set(), [v]
        while stack:
            for c in children[stack.pop()]:
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out


def mutilate(dag: Dag, intervention: Intervention | Iterable[str]) -> Dag:
    """Remove every edge into an intervened variable."""
    names = intervention.names if isinstance(intervention, Intervention) else tuple(intervention)
    unknown = set(names) - set(dag.variables)
    if unknown:
        raise ScmError(f"unknown intervention target(s) {sorted(unknown)}")
    cut = set(names)
    return Dag(dag.variables, {v: (() if v in cut else ps) for v, ps in dag.parents.items()})


# the model

@dataclass(frozen=True, eq=False)
class Scm:
    variables: tuple[str, ...]
    parents: Mapping[str, tuple[str, ...]]
    mechanisms: Mapping[str, np.ndarray]
    noise: Mapping[str, np.ndarray]
    name: str = "scm"
    dag: Dag = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        dag = Dag(self.variables, self.parents)
        object.__setattr__(self, "dag", dag)
        object.__setattr__(self, "parents", dag.parents)
        mechs, noise = {}, {}
        for v in self.variables:
            p = np.asarray(self.noise[v], dtype=np.float64)
            if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
                raise ScmError(f"noise distribution of {v!r} is not a probability vector: {p}")
            table = np.asarray(self.mechanisms[v], dtype=np.int8)
            want = (2,) * len(self.parents[v]) + (len(p),)
            if table.shape != want:
                raise ScmError(f"mechanism of {v!r} has shape {table.shape}, expected {want}")
            if not np.isin(table, (0, 1)).all():
                raise ScmError(f"mechanism of {v!r} must map into {{0, 1}}")
            table.setflags(write=False)
            p.setflags(write=False)
            mechs[v], noise[v] = table, p
        object.__setattr__(self, "mechanisms", mechs)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "_order", dag.topological_order())

    @property
    def d(self) -> int:
        return len(self.variables)

    @property
    def order(self) -> list[str]:
        return list(self._order)

    def index(self, v: str) -> int:
        try:
            return self.variables.index(v)
        except ValueError:
            raise ScmError(f"unknown variable {v!r}") from None

    @property
    def noise_probs(self) -> dict[str, float]:
        """P(U_i = 1) for binary-noise variables."""
        out = {}
        for v, p in self.noise.items():
            if len(p) != 2:
                raise ScmError(f"{v!r} has {len(p)} noise states, not Bernoulli noise")
            out[v] = float(p[1])
        return out

    def conditional_table(self, v: str) -> np.ndarray:
        """P(V = 1 | parents) as an array indexed by parent values."""
        return (self.mechanisms[v] * self.noise[v]).sum(axis=-1)

    def evaluate(self, v: str, parent_values: np.ndarray, noise_state: np.ndarray) -> np.ndarray:
        """Vectorised mechanism lookup: ``parent_values`` is (n, k), ``noise_state`` (n,)."""
        idx = tuple(parent_values[:, k] for k in range(parent_values.shape[1])) + (noise_state,)
        return self.mechanisms[v][idx]

    def check_intervention(self, intervention: Intervention) -> None:
        unknown = set(intervention.names) - set(self.variables)
        if unknown:
            raise ScmError(f"unknown intervention target(s) {sorted(unknown)}")


def scm_from_functions(variables: Sequence[str], parents: Mapping[str, Sequence[str]],
                       functions: Mapping[str, callable], noise_probs: Mapping[str, float],
                       name: str = "scm") -> Scm:
    """Tabulate boolean functions ``f(*parent_values, u)`` with Bernoulli noise."""
    mechs = {}
    for v in variables:
        k = len(parents.get(v, ()))
        table = np.zeros((2,) * (k + 1), dtype=np.int8)
        for args in itertools.product((0, 1), repeat=k + 1):
            table[args] = int(functions[v](*args)) & 1
        mechs[v] = table
    noise = {v: np.array([1.0 - noise_probs[v], noise_probs[v]]) for v in variables}
    return Scm(tuple(variables), {v: tuple(parents.get(v, ())) for v in variables}, mechs, noise, name)


# builtin benchmark structures: chain, confounder, backdoor

_BUILTIN = {
    "M1": (
        {"X": (), "Y": ("X",), "Z": ("Y",), "W": ("Z",)},
        {
            "X": lambda u: u,
            "Y": lambda x, u: x & u,
            "Z": lambda y, u: y & u,
            "W": lambda z, u: z & u,
        },
    ),
    "M2": (
        {"X": ("Z",), "Y": ("X", "Z"), "Z": (), "W": ("X",)},
        {
            "X": lambda z, u: z ^ u,
            "Y": lambda x, z, u: (x & u) ^ (z & u),
            "Z": lambda u: u,
            "W": lambda x, u: x & u,
        },
    ),
    "M3": (
        {"X": ("Z",), "Y": ("W", "X"), "Z": (), "W": ("Z",)},
        {
            "X": lambda z, u: z ^ u,
            "Y": lambda w, x, u: x & (w & u),
            "Z": lambda u: u,
            "W": lambda z, u: z & u,
        },
    ),
}
BUILTIN_VARIABLES = ("X", "Y", "Z", "W")


def builtin_scm(name: str, noise_probs: Sequence[float] | Mapping[str, float]) -> Scm:
    """M1 (chain), M2 (confounder) or M3 (backdoor) over X, Y, Z, W.

    ``noise_probs`` gives P(U=1) for X, Y, Z, W in that order (or by name).
    """
    key = name.upper()
    if key not in _BUILTIN:
        raise ScmError(f"unknown builtin SCM {name!r}; choose from {sorted(_BUILTIN)}")
    if not isinstance(noise_probs, Mapping):
        noise_probs = dict(zip(BUILTIN_VARIABLES, noise_probs, strict=True))
    for v in BUILTIN_VARIABLES:
        if not 0.0 <= noise_probs[v] <= 1.0:
            raise ScmError(f"noise probability for {v} outside [0, 1]: {noise_probs[v]}")
    parents, funcs = _BUILTIN[key]
    return scm_from_functions(BUILTIN_VARIABLES, parents, funcs, noise_probs, name=key)


def random_noise_probs(seed: int | np.random.Generator) -> list[float]:
    rng = np.random.default_rng(seed)
    return [float(p) for p in rng.uniform(0.0, 1.0, size=len(BUILTIN_VARIABLES))]


def random_boolean_scm(n_nodes: int, seed: int | np.random.Generator, max_parents: int = 3,
                       edge_prob: float = 0.5) -> Scm:
    """Random DAG over ``V0..V{n-1}`` with random truth tables and Bernoulli noise."""
    rng = np.random.default_rng(seed)
    names = [f"V{i}" for i in range(n_nodes)]
    parents, mechs, noise = {}, {}, {}
    for i, v in enumerate(names):
        cands = [names[j] for j in range(i) if rng.random() < edge_prob]
        if len(cands) > max_parents:
            cands = [cands[j] for j in sorted(rng.choice(len(cands), max_parents, replace=False))]
        parents[v] = tuple(cands)
        mechs[v] = rng.integers(0, 2, size=(2,) * (len(cands) + 1)).astype(np.int8)
        p = rng.uniform(0.05, 0.95)
        noise[v] = np.array([1.0 - p, p])
    perm = rng.permutation(n_nodes)
    return Scm(tuple(names[k] for k in perm), parents, mechs, noise, name=f"random{n_nodes}")


# Bayesian networks

def _cpt_mechanism(rows: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse-CDF on one uniform coin: V = 1 iff U < P(V=1 | row)."""
    p1 = rows[:, 1]
    cuts = np.unique(p1[(p1 > 0.0) & (p1 < 1.0)])
    upper = np.append(cuts, 1.0)
    lower = np.insert(cuts, 0, 0.0)
    noise = upper - lower
    table = (upper[None, :] <= p1[:, None] + 1e-15).astype(np.int8)
    table[p1 == 0.0] = 0
    return table.reshape((2,) * k + (len(noise),)), noise


def bayes_net_from_dict(doc: Mapping, name: str = "bn") -> Scm:
    try:
        variables = tuple(doc["variables"])
        parents = {v: tuple(doc["parents"].get(v, ())) for v in variables}
        cpts = doc["cpt"]
    except (KeyError, TypeError) as exc:
        raise ScmError(f"malformed Bayesian network document: missing {exc}") from None
    Dag(variables, parents)
    mechs, noise = {}, {}
    for v in variables:
        k = len(parents[v])
        rows = np.asarray(cpts[v], dtype=np.float64)
        if rows.shape != (2 ** k, 2):
            raise ScmError(f"CPT of {v!r} has shape {rows.shape}, expected {(2 ** k, 2)}")
        if (rows < 0).any() or (np.abs(rows.sum(axis=1) - 1.0) > 1e-9).any():
            raise ScmError(f"CPT rows of {v!r} must be nonnegative and sum to 1")
        mechs[v], noise[v] = _cpt_mechanism(rows, k)
    return Scm(variables, parents, mechs, noise, name=doc.get("name", name))


def load_bayes_net(path: str | Path) -> Scm:
    """Load a JSON Bayesian network.

    Fields: ``variables`` (ordered names), ``parents`` (name -> list) and
    ``cpt`` (name -> list of ``[P(V=0), P(V=1)]`` rows, parent assignments
    in binary counting order with the last parent varying fastest).
    """
    path = Path(path)
    with path.open() as fh:
        doc = json.load(fh)
    return bayes_net_from_dict(doc, name=path.stem)


BUILTIN_NETS = ("asia", "cancer", "earthquake")


def builtin_net_path(name: str) -> Path:
    if name.lower() not in BUILTIN_NETS:
        raise ScmError(f"unknown network {name!r}; shipped networks are {BUILTIN_NETS}")
    return Path(str(resources.files("gnncausal.data") / f"{name.lower()}.json"))


def load_net(name_or_path: str | Path) -> Scm:
    """Load a shipped network by name or any JSON network by path."""
    if str(name_or_path).lower() in BUILTIN_NETS:
        return load_bayes_net(builtin_net_path(str(name_or_path)))
    return load_bayes_net(name_or_path)


# exact distributions

def all_assignments(d: int) -> np.ndarray:
    """Every binary assignment, first variable most significant, shape (2**d, d)."""
    idx = np.arange(2 ** d)
    return ((idx[:, None] >> np.arange(d - 1, -1, -1)[None, :]) & 1).astype(np.int8)


def assignment_index(values: np.ndarray) -> np.ndarray:
    values = np.atleast_2d(values).astype(np.int64)
    d = values.shape[1]
    return values @ (1 << np.arange(d - 1, -1, -1))


@dataclass(frozen=True, eq=False)
class DistributionTable:
    variables: tuple[str, ...]
    probs: np.ndarray
    regime: Intervention = Intervention()

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (2 ** len(self.variables),):
            raise ScmError(f"table needs {2 ** len(self.variables)} entries, got {p.shape}")
        if (p < -1e-15).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ScmError(f"table is not a distribution (sum={p.sum()!r})")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def as_array(self) -> np.ndarray:
        return self.probs.reshape((2,) * len(self.variables))

    def prob(self, assignment: Mapping[str, int]) -> float:
        mask = self._event(assignment)
        return float(self.probs[mask].sum())

    def _event(self, assignment: Mapping[str, int]) -> np.ndarray:
        grid = all_assignments(len(self.variables))
        mask = np.ones(len(self.probs), dtype=bool)
        for v, val in assignment.items():
            if v not in self.variables:
                raise ScmError(f"variable {v!r} not in table")
            mask &= grid[:, self.variables.index(v)] == val
        return mask

    def marginal(self, variable: str) -> float:
        """P(variable = 1)."""
        return self.prob({variable: 1})

    def marginals(self) -> dict[str, float]:
        return {v: self.marginal(v) for v in self.variables}

    def conditional(self, target: str, given: Mapping[str, int]) -> float:
        """P(target = 1 | given)."""
        denom = self.prob(given)
        if denom <= 0.0:
            raise ScmError(f"conditioning event {dict(given)} has probability zero")
        return self.prob({**given, target: 1}) / denom


def marginal(table: DistributionTable, variable: str) -> float:
    return table.marginal(variable)


def conditional(table: DistributionTable, target: str, given: Mapping[str, int]) -> float:
    return table.conditional(target, given)


def _check_enumerable(scm: Scm) -> None:
    if scm.d > MAX_ENUM_VARIABLES:
        raise EnumerationTooLarge(f"{scm.d} variables exceeds the enumeration bound {MAX_ENUM_VARIABLES}")


def exact_joint(scm: Scm, intervention: Intervention = Intervention()) -> DistributionTable:
    """Sum P(u) over every exogenous configuration u, evaluating the
    (mutilated) equations deterministically. Coin interventions contribute
    one extra independent binary coin each."""
    _check_enumerable(scm)
    scm.check_intervention(intervention)
    reps = intervention.as_dict()
    # exogenous factors: one per non-intervened variable, one per coin target
    factors: list[tuple[str, np.ndarray]] = []
    for v in scm.variables:
        if v in reps:
            if isinstance(reps[v], BernoulliCoin):
                factors.append((v, np.array([1.0 - reps[v].q, reps[v].q])))
        else:
            factors.append((v, scm.noise[v]))
    n_cfg = int(np.prod([len(p) for _, p in factors])) if factors else 1
    if n_cfg > MAX_NOISE_CONFIGS:
        raise EnumerationTooLarge(f"{n_cfg} exogenous configurations exceeds {MAX_NOISE_CONFIGS}")
    grids = np.meshgrid(*[np.arange(len(p)) for _, p in factors], indexing="ij") if factors else []
    states = {v: g.reshape(-1) for (v, _), g in zip(factors, grids)}
    weight = np.ones(n_cfg)
    for (v, p) in factors:
        weight = weight * p[states[v]]
    values = np.zeros((n_cfg, scm.d), dtype=np.int8)
    for v in scm.order:
        i = scm.index(v)
        rep = reps.get(v)
        if isinstance(rep, Constant):
            values[:, i] = rep.value
        elif isinstance(rep, BernoulliCoin):
            values[:, i] = states[v]
        else:
            pa = values[:, [scm.index(p) for p in scm.parents[v]]]
            values[:, i] = scm.evaluate(v, pa, states[v])
    probs = np.bincount(assignment_index(values), weights=weight, minlength=2 ** scm.d)
    return DistributionTable(scm.variables, probs, intervention)


def truncated_factorization_joint(scm: Scm, intervention: Intervention = Intervention()) -> DistributionTable:
    """Product of p(v | pa(v)) over non-intervened variables times the
    replacement distributions of the intervened ones."""
    _check_enumerable(scm)
    scm.check_intervention(intervention)
    reps = intervention.as_dict()
    grid = all_assignments(scm.d)
    probs = np.ones(len(grid))
    for v in scm.variables:
        i = scm.index(v)
        if v in reps:
            p1 = np.full(len(grid), reps[v].prob_one())
        else:
            cond = scm.conditional_table(v)
            idx = tuple(grid[:, scm.index(p)] for p in scm.parents[v])
            p1 = cond[idx] if idx else np.full(len(grid), float(cond))
        probs *= np.where(grid[:, i] == 1, p1, 1.0 - p1)
    return DistributionTable(scm.variables, probs, intervention)


def exact_ate(scm: Scm, x: str, y: str) -> float:
    """E[Y | do(X=1)] - E[Y | do(X=0)] by exact enumeration."""
    if x == y:
        raise ScmError("treatment and outcome must differ")
    scm.index(x), scm.index(y)
    hi = exact_joint(scm, Intervention.of({x: 1})).marginal(y)
    lo = exact_joint(scm, Intervention.of({x: 0})).marginal(y)
    return hi - lo


def autonomy_check(scm: Scm, intervention: Intervention, variable: str, tol: float = 1e-12) -> bool:
    """True iff p(variable | its parents) is unchanged by the intervention,
    wherever the parent assignment has positive probability in both regimes."""
    if variable in intervention.names:
        raise ScmError(f"{variable!r} is an intervention target")
    base = exact_joint(scm, Intervention())
    other = exact_joint(scm, intervention)
    pa = scm.parents[variable]
    for vals in itertools.product((0, 1), repeat=len(pa)):
        given = dict(zip(pa, vals))
        if base.prob(given) <= 0.0 or other.prob(given) <= 0.0:
            continue
        if abs(base.conditional(variable, given) - other.conditional(variable, given)) > tol:
            return False
    return True


# sampling and datasets

def split_bounds(n: int) -> tuple[int, int]:
    """Train/validation/test boundaries for an 80/10/10 split."""
    train = int(n * SPLIT_FRACTIONS[0] + 1e-9)
    valid = train + int(n * SPLIT_FRACTIONS[1] + 1e-9)
    return train, valid


@dataclass(eq=False)
class RegimeDataset:
    variables: tuple[str, ...]
    regime: Intervention
    samples: np.ndarray
    seed: int | None = None
    bounds: tuple[int, int] | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int8)
        if self.bounds is None:
            self.bounds = split_bounds(len(self.samples))
        for name, rep in self.regime.targets:
            if isinstance(rep, Constant):
                col = self.samples[:, self.variables.index(name)]
                if (col != rep.value).any():
                    raise ScmError(f"samples violate {name}={rep.value}")

    @property
    def train(self) -> np.ndarray:
        return self.samples[: self.bounds[0]]

    @property
    def valid(self) -> np.ndarray:
        return self.samples[self.bounds[0]: self.bounds[1]]

    @property
    def test(self) -> np.ndarray:
        return self.samples[self.bounds[1]:]

    def split(self, name: str) -> np.ndarray:
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]

    def manifest(self) -> dict:
        return {
            "variables": list(self.variables),
            "regime": self.regime.label(),
            "seed": self.seed,
            "n": int(len(self.samples)),
            "split": {"train_end": self.bounds[0], "valid_end": self.bounds[1]},
        }

    def write(self, csv_path: str | Path) -> Path:
        """Write CSV plus a sidecar ``.json`` manifest; returns the manifest path."""
        csv_path = Path(csv_path)
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.variables)
            w.writerows(self.samples.tolist())
        meta = csv_path.with_suffix(".json")
        meta.write_text(json.dumps({**self.manifest(), "csv": csv_path.name}, indent=2) + "\n")
        return meta

    @classmethod
    def read(cls, csv_path: str | Path) -> "RegimeDataset":
        csv_path = Path(csv_path)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        with csv_path.open() as fh:
            rows = list(csv.reader(fh))
        variables = tuple(rows[0])
        samples = np.array(rows[1:], dtype=np.int8).reshape(-1, len(variables))
        split = meta["split"]
        return cls(variables, Intervention.parse(meta["regime"]), samples, meta.get("seed"),
                   (split["train_end"], split["valid_end"]))


def ancestral_sample(scm: Scm, intervention: Intervention, n: int, seed: int) -> RegimeDataset:
    """Simulate the equations in topological order under ``intervention``."""
    if n <= 0:
        raise ScmError("sample count must be positive")
    scm.check_intervention(intervention)
    rng = np.random.default_rng(seed)
    reps = intervention.as_dict()
    values = np.zeros((n, scm.d), dtype=np.int8)
    for v in scm.order:
        i = scm.index(v)
        rep = reps.get(v)
        if isinstance(rep, Constant):
            values[:, i] = rep.value
        elif isinstance(rep, BernoulliCoin):
            values[:, i] = rng.random(n) < rep.q
        else:
            cdf = np.cumsum(scm.noise[v])
            state = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(cdf) - 1)
            pa = values[:, [scm.index(p) for p in scm.parents[v]]]
            values[:, i] = scm.evaluate(v, pa, state)
    return RegimeDataset(scm.variables, intervention, values, seed)


def empirical_table(dataset: RegimeDataset) -> DistributionTable:
    counts = np.bincount(assignment_index(dataset.samples), minlength=2 ** len(dataset.variables))
    return DistributionTable(dataset.variables, counts / counts.sum(), dataset.regime)
