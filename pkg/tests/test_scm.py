import json

import numpy as np
import pytest

from gnncausal.scm import (
    BernoulliCoin, Constant, Dag, DistributionTable, EnumerationTooLarge, Intervention, RegimeDataset,
    ScmError, all_assignments, ancestral_sample, autonomy_check, bayes_net_from_dict, builtin_scm,
    empirical_table, exact_ate, exact_joint, load_net, mutilate, random_boolean_scm, random_noise_probs,
    split_bounds, truncated_factorization_joint,
)
from oracles import closed_form_ate, simulate_joint

P = [0.3, 0.6, 0.45, 0.8]
REGIMES = ["", "X=0", "X=1", "X=coin0.5", "Z=1,W=coin0.2"]


def as_oracle_do(iv: Intervention) -> dict:
    return {n: ("coin", r.q) if isinstance(r, BernoulliCoin) else r.value for n, r in iv.targets}


def table_from_dict(scm, joint: dict) -> np.ndarray:
    out = np.zeros(2 ** scm.d)
    for key, p in joint.items():
        out[int("".join(map(str, key)), 2)] += p
    return out


@pytest.mark.parametrize("name", ["M1", "M2", "M3"])
@pytest.mark.parametrize("regime", REGIMES)
def test_exact_joint_matches_brute_force_simulation(name, regime):
    scm = builtin_scm(name, P)
    iv = Intervention.parse(regime)
    want = table_from_dict(scm, simulate_joint(scm, as_oracle_do(iv)))
    assert np.max(np.abs(exact_joint(scm, iv).probs - want)) < 1e-12
    assert np.max(np.abs(truncated_factorization_joint(scm, iv).probs - want)) < 1e-12


@pytest.mark.parametrize("seed", range(8))
def test_random_scms_agree_with_brute_force(seed):
    scm = random_boolean_scm(5, seed)
    target = scm.variables[seed % 5]
    for iv in (Intervention(), Intervention.of({target: 1}), Intervention.of({target: BernoulliCoin(0.3)})):
        want = table_from_dict(scm, simulate_joint(scm, as_oracle_do(iv)))
        assert np.allclose(exact_joint(scm, iv).probs, want, atol=1e-12)
        assert np.allclose(truncated_factorization_joint(scm, iv).probs, want, atol=1e-12)


@pytest.mark.parametrize("net", ["asia", "earthquake", "cancer"])
def test_networks_two_oracles_agree(net):
    scm = load_net(net)
    for iv in [Intervention()] + [Intervention.of({v: BernoulliCoin(0.5)}) for v in scm.variables[:3]]:
        a, b = exact_joint(scm, iv).probs, truncated_factorization_joint(scm, iv).probs
        assert np.max(np.abs(a - b)) <= 1e-12


def test_earthquake_alarm_marginal_by_hand():
    scm = load_net("earthquake")
    # P(A=1) = sum_{b,e} P(b) P(e) P(A=1 | b, e)
    pb, pe = 0.01, 0.02
    cpt = {(1, 1): 0.95, (1, 0): 0.94, (0, 1): 0.29, (0, 0): 0.001}
    by_hand = sum((pb if b else 1 - pb) * (pe if e else 1 - pe) * cpt[b, e] for b in (0, 1) for e in (0, 1))
    assert abs(exact_joint(scm).marginal("A") - by_hand) < 1e-12
    coin = sum((pb if b else 1 - pb) * 0.5 * cpt[b, e] for b in (0, 1) for e in (0, 1))
    assert abs(exact_joint(scm, Intervention.parse("E=coin0.5")).marginal("A") - coin) < 1e-12


def test_asia_lung_marginal_by_hand():
    # P(lung) = P(smoke) P(lung | smoke) + P(~smoke) P(lung | ~smoke) = .5 * .1 + .5 * .01
    assert abs(exact_joint(load_net("asia")).marginal("lung") - 0.055) < 1e-12


@pytest.mark.parametrize("net", ["asia", "earthquake", "cancer"])
def test_cpt_conversion_reproduces_conditionals(net):
    from gnncausal.scm import builtin_net_path

    doc = json.loads(builtin_net_path(net).read_text())
    scm = load_net(net)
    for v in scm.variables:
        rows = np.asarray(doc["cpt"][v])[:, 1]
        got = np.atleast_1d(scm.conditional_table(v)).reshape(-1)
        assert np.allclose(got, rows, atol=1e-12)


@pytest.mark.parametrize("name", ["M1", "M2", "M3"])
@pytest.mark.parametrize("seed", range(5))
def test_exact_ate_matches_closed_form(name, seed):
    probs = random_noise_probs(seed)
    scm = builtin_scm(name, probs)
    assert abs(exact_ate(scm, "X", "Y") - closed_form_ate(name, dict(zip("XYZW", probs)))) < 1e-12


def test_ate_is_zero_without_causal_path():
    assert abs(exact_ate(builtin_scm("M1", P), "Y", "X")) < 1e-15


@pytest.mark.parametrize("name", ["M1", "M2", "M3"])
def test_autonomy_under_atomic_interventions(name):
    scm = builtin_scm(name, P)
    for t in scm.variables:
        for val in (0, 1):
            iv = Intervention.of({t: val})
            for v in scm.variables:
                if v != t:
                    assert autonomy_check(scm, iv, v)
    with pytest.raises(ScmError):
        autonomy_check(scm, Intervention.of({"X": 1}), "X")


def test_interventions_parse_and_label():
    iv = Intervention.parse("tub=coin0.5, X=1")
    assert iv.names == ("X", "tub")
    assert iv.as_dict() == {"X": Constant(1), "tub": BernoulliCoin(0.5)}
    assert iv.label() == "X=1,tub=coin0.5"
    assert Intervention.parse(iv.label()) == iv
    assert str(Intervention()) == "do()" and Intervention.parse("obs").is_empty()
    for bad in ("X=2", "X", "X=coin1.5"):
        with pytest.raises(ScmError):
            Intervention.parse(bad)
    with pytest.raises(ScmError):
        Intervention.parse("X=1,X=0")


def test_dag_order_cycles_and_mutilation():
    dag = Dag(("a", "b", "c"), {"a": (), "b": ("a",), "c": ("a", "b")})
    assert dag.topological_order() == ["a", "b", "c"]
    assert dag.descendants("a") == {"b", "c"}
    cut = mutilate(dag, Intervention.of({"c": 1}))
    assert cut.edges() == {("a", "b")}
    with pytest.raises(ScmError):
        mutilate(dag, Intervention.of({"q": 1}))
    with pytest.raises(ScmError):
        Dag(("a", "b"), {"a": ("b",), "b": ("a",)})


def test_distribution_table_checks():
    with pytest.raises(ScmError):
        DistributionTable(("a",), np.array([0.3, 0.3]))
    t = DistributionTable(("a", "b"), np.array([0.5, 0.0, 0.0, 0.5]))
    assert t.conditional("b", {"a": 1}) == 1.0
    with pytest.raises(ScmError):
        DistributionTable(("a", "b"), np.array([1.0, 0.0, 0.0, 0.0])).conditional("b", {"a": 1})


def test_all_assignments_order():
    assert all_assignments(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]


def test_builtin_and_enumeration_errors():
    with pytest.raises(ScmError):
        builtin_scm("M9", P)
    with pytest.raises(ScmError):
        builtin_scm("M1", [0.1, 1.2, 0.3, 0.4])
    with pytest.raises(EnumerationTooLarge):
        exact_joint(random_boolean_scm(21, 0, max_parents=1))
    with pytest.raises(ScmError):
        exact_joint(builtin_scm("M1", P), Intervention.of({"Q": 1}))


def test_malformed_network_documents():
    with pytest.raises(ScmError):
        bayes_net_from_dict({"variables": ["a"]})
    with pytest.raises(ScmError):
        bayes_net_from_dict({"variables": ["a"], "parents": {}, "cpt": {"a": [[0.5, 0.6]]}})


def test_random_scm_respects_parent_cap():
    for seed in range(20):
        scm = random_boolean_scm(5, seed, max_parents=2)
        assert all(len(p) <= 2 for p in scm.parents.values())
        Dag(scm.variables, scm.parents).topological_order()


# sampling

def test_ancestral_frequencies_match_exact_joint():
    scm = load_net("asia")
    iv = Intervention.parse("tub=coin0.5")
    ds = ancestral_sample(scm, iv, 200_000, seed=1)
    exact = exact_joint(scm, iv).probs
    emp = empirical_table(ds).probs
    sd = np.sqrt(exact * (1 - exact) / 200_000)
    assert np.all(np.abs(emp - exact) <= 5 * sd + 1e-12)


def test_constant_targets_are_clamped_and_samples_validated():
    ds = ancestral_sample(builtin_scm("M2", P), Intervention.of({"X": 1}), 500, seed=0)
    assert (ds.samples[:, 0] == 1).all()
    with pytest.raises(ScmError):
        RegimeDataset(("X",), Intervention.of({"X": 1}), np.array([[0]]))
    with pytest.raises(ScmError):
        ancestral_sample(builtin_scm("M2", P), Intervention(), 0, seed=0)


def test_split_and_determinism(tmp_path):
    assert split_bounds(10) == (8, 9)
    assert split_bounds(10000) == (8000, 9000)
    scm = builtin_scm("M1", P)
    a = ancestral_sample(scm, Intervention.parse("X=coin0.5"), 10, seed=5)
    assert (len(a.train), len(a.valid), len(a.test)) == (8, 1, 1)
    a.write(tmp_path / "a.csv")
    ancestral_sample(scm, Intervention.parse("X=coin0.5"), 10, seed=5).write(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = RegimeDataset.read(tmp_path / "a.csv")
    assert np.array_equal(back.samples, a.samples) and back.regime == a.regime and back.bounds == a.bounds
