import itertools

import numpy as np
import pytest

from gnncausal.bridge import (
    NcmType2, construct_gnn_from_scm, decompose, decompose_table, ncm_type2_forward, ncm_type2_from_scm,
    ncm_type2_to_scm, verify_conversion,
)
from gnncausal.scm import (
    Intervention, ScmError, builtin_scm, exact_joint, load_net, random_boolean_scm, scm_from_functions,
)

P = [0.3, 0.6, 0.45, 0.8]


def and_scm():
    """X = Z and U_X, Z = U_Z."""
    return scm_from_functions(["X", "Z"], {"X": ["Z"]}, {"X": lambda z, u: z & u, "Z": lambda u: u},
                              {"X": 0.5, "Z": 0.5})


def test_and_example_terms():
    dec = decompose(and_scm(), "X")
    assert dec.edge_terms["Z"].tolist() == [0, 1]          # f_XZ(Z) = Z
    assert dec.args == ("Z",)
    for z, u in itertools.product((0, 1), repeat=2):
        assert dec.remainder[z, u] == u - (z | u)
        assert dec.evaluate({"Z": z}, u) == (z & u)


def test_and_example_constructed_layer():
    scm = and_scm()
    g = construct_gnn_from_scm(scm)
    check = verify_conversion(scm, g)
    assert check and check.checked == 6
    for z, u in itertools.product((0, 1), repeat=2):
        assert g.forward({"Z": z}, {"X": u, "Z": z})["X"] == (z & u)


def test_linear_equation_leaves_noise_only_remainder():
    table = np.zeros((2, 2, 2), dtype=np.int64)
    for z, w, u in itertools.product((0, 1), repeat=3):
        table[z, w, u] = 2 * z + 3 * w + u
    dec = decompose_table("X", ("Z", "W"), table)
    assert dec.args == ()
    assert dec.edge_terms["Z"].tolist() == [0, 2] and dec.edge_terms["W"].tolist() == [0, 3]
    for z, w, u in itertools.product((0, 1), repeat=3):
        assert dec.evaluate({"Z": z, "W": w}, u) == table[z, w, u]


def test_constant_zero_equation():
    dec = decompose_table("X", ("A", "B"), np.zeros((2, 2, 2), dtype=np.int64))
    assert all(not t.any() for t in dec.edge_terms.values())
    assert dec.args == () and not dec.remainder.any()


def test_single_node_identity():
    scm = scm_from_functions(["U"], {}, {"U": lambda u: u}, {"U": 0.3})
    g = construct_gnn_from_scm(scm)
    assert g.psi_table == {}
    args, rem = g.phi_table["U"]
    assert args == () and rem.tolist() == [0, 1]


def test_too_many_parents():
    with pytest.raises(ScmError):
        decompose_table("X", tuple("abcdefghi"), np.zeros((2,) * 10, dtype=np.int64))


@pytest.mark.parametrize("seed", range(30))
def test_decomposition_exact_on_random_scms(seed):
    scm = random_boolean_scm(5, seed)
    for v in scm.variables:
        dec = decompose(scm, v)
        for vals in itertools.product((0, 1), repeat=len(dec.parents)):
            for u in range(2):
                assert dec.evaluate(dict(zip(dec.parents, vals)), u) == scm.mechanisms[v][vals + (u,)]


@pytest.mark.parametrize("name", ["M1", "M2", "M3"])
def test_builtins_convert(name):
    scm = builtin_scm(name, P)
    assert verify_conversion(scm, construct_gnn_from_scm(scm))


def test_categorical_noise_network_converts():
    scm = load_net("asia")
    assert verify_conversion(scm, construct_gnn_from_scm(scm))


def test_corrupted_psi_entry_is_caught():
    scm = builtin_scm("M1", P)
    g = construct_gnn_from_scm(scm)
    g.psi_table[("Y", "X")][1] += 1
    check = verify_conversion(scm, g)
    assert not check
    ce = check.counterexample
    assert ce["variable"] == "Y" and ce["parents"] == {"X": 1} and ce["got"] != ce["expected"]


def test_corrupted_phi_entry_is_caught():
    scm = builtin_scm("M2", P)
    g = construct_gnn_from_scm(scm)
    args, rem = g.phi_table["Y"]
    rem[(0,) * rem.ndim] += 1
    assert not verify_conversion(scm, g)


# NCM-Type 2

@pytest.mark.parametrize("name", ["M1", "M2", "M3"])
def test_ncm_reproduces_equations(name):
    scm = builtin_scm(name, P)
    ncm = ncm_type2_from_scm(scm)
    for vals in itertools.product((0, 1), repeat=4):
        for noise in itertools.product((0, 1), repeat=4):
            values = dict(zip(scm.variables, vals))
            nz = dict(zip(scm.variables, noise))
            out = ncm_type2_forward(ncm, values, nz)
            for v in scm.variables:
                idx = tuple(values[p] for p in scm.parents[v]) + (nz[v],)
                assert out[v] == scm.mechanisms[v][idx]


def test_zero_edge_terms_leave_noise_term():
    scm = builtin_scm("M2", P)
    ncm = ncm_type2_from_scm(scm)
    zeroed = NcmType2(ncm.variables, ncm.parents, {k: np.zeros(2, dtype=np.int64) for k in ncm.edge_terms},
                      ncm.noise_terms, ncm.noise)
    values, noise = {"X": 1, "Y": 0, "Z": 1, "W": 1}, {"X": 1, "Y": 1, "Z": 0, "W": 1}
    out = ncm_type2_forward(zeroed, values, noise)
    for v in scm.variables:
        args, table = ncm.noise_terms[v]
        assert out[v] == table[tuple(values[a] for a in args) + (noise[v],)]
    assert out["Z"] == noise["Z"]   # root: noise term alone


@pytest.mark.parametrize("seed", range(10))
def test_ncm_is_extensionally_equal(seed):
    scm = random_boolean_scm(5, seed)
    back = ncm_type2_to_scm(ncm_type2_from_scm(scm))
    for iv in (Intervention(), Intervention.of({scm.variables[0]: 1}), Intervention.parse(f"{scm.variables[2]}=coin0.4")):
        assert np.array_equal(exact_joint(back, iv).probs, exact_joint(scm, iv).probs)
    assert ncm_type2_from_scm(scm).simulate({v: 0 for v in scm.variables}) == {
        v: int(x) for v, x in zip(scm.variables, _simulate(scm, {v: 0 for v in scm.variables}))}


def _simulate(scm, noise):
    vals = {}
    for v in scm.order:
        vals[v] = int(scm.mechanisms[v][tuple(vals[p] for p in scm.parents[v]) + (noise[v],)])
    return [vals[v] for v in scm.variables]
