import numpy as np
import pytest

import gnncausal.numeric as T
from gnncausal import ivgae
from gnncausal.gnn import GraphSpec
from gnncausal.inference import log_likelihood_rows
from gnncausal.ivgae import IvgaeModel, ModelConfig, TrainConfig, causal_elbo, elbo_per_sample, elbo_terms, train
from gnncausal.scm import Intervention, ScmError, ancestral_sample, builtin_scm, load_net
from oracles import central_diff, rel_error

P = [0.3, 0.6, 0.45, 0.8]


def m1_model(seed=0, **kw) -> IvgaeModel:
    return IvgaeModel(GraphSpec.from_scm(builtin_scm("M1", P)), ModelConfig(**kw), seed=seed)


def test_shapes_and_zero_initial_decoder():
    m = m1_model(latent_dim=3, hidden=8)
    mu, lv = m.encode(np.ones(4), ["X"])
    assert mu.shape == (4, 3) and lv.shape == (4, 3)
    logits = m.decode(np.zeros((5, 4, 3)), ["X"], clamp_values={"X": 1})
    assert logits.shape == (5, 4)
    assert np.array_equal(logits, np.zeros_like(logits))


def test_reconstruction_skips_intervened_nodes():
    m = m1_model(zero_init_output=False, hidden=8)
    assert m.reconstruction_mask(["X", "Z"]).tolist() == [0, 1, 0, 1]
    rng = np.random.default_rng(0)
    v = np.array([[1.0, 1.0, 0.0, 0.0]])
    mask = m.mask_for(["X"])
    eps = rng.standard_normal((1, 4, m.latent_dim))
    terms = elbo_terms(m, v, mask, eps=eps)
    mu, lv = m.encode_tensors(v, np.broadcast_to(mask, v.shape))
    z = mu.data + np.exp(0.5 * lv.data) * eps
    logits = m.decode_tensors(z, np.broadcast_to(mask, v.shape), v).data[0]
    keep = [1, 2, 3]
    want = np.sum(v[0, keep] * logits[keep] - np.logaddexp(0, logits[keep]))
    assert np.isclose(terms.reconstruction.data[0], want)


def test_causal_elbo_gradient_matches_finite_differences():
    m = m1_model(zero_init_output=False, hidden=6, latent_dim=2)
    batch = ancestral_sample(builtin_scm("M1", P), Intervention.of({"X": 1}), 6, seed=0).samples
    mask = m.mask_for(["X"])
    eps = np.random.default_rng(0).standard_normal((6, 4, 2))
    params = m.parameters()
    loss = lambda: T.mean(elbo_terms(m, batch, mask, eps=eps).elbo)
    grads = T.backward(loss(), params)
    for p, g in list(zip(params, grads))[::3]:
        def f(a, p=p):
            old = p.data
            p.data = a
            out = float(loss().data)
            p.data = old
            return out
        assert rel_error(g, central_diff(f, p.data.copy())) < 1e-4


def test_constant_target_mismatch_is_rejected():
    m = m1_model()
    with pytest.raises(ScmError):
        causal_elbo(m, np.array([[0, 1, 1, 1]]), Intervention.of({"X": 1}))


def test_elbo_lower_bounds_importance_sampled_likelihood():
    m = m1_model(seed=3, zero_init_output=False, hidden=8)
    rows = ancestral_sample(builtin_scm("M1", P), Intervention(), 20, seed=1).samples
    elbo = np.mean([elbo_per_sample(m, rows, Intervention(), seed=s) for s in range(200)], axis=0)
    logp = log_likelihood_rows(m, rows, Intervention(), n=4000, seed=0)
    assert np.all(elbo <= logp + 1e-3)


def test_evaluate_reports_paired_bound_gap():
    m = m1_model(seed=3, zero_init_output=False, hidden=8)
    ds = small_datasets()
    out = ivgae.evaluate(m, ds, "test", seed=0, is_samples=20)
    assert out["bound_gap_se"] > 0
    np.testing.assert_allclose(out["bound_gap"], out["elbo"] - out["logp"], atol=1e-12)
    assert "bound_gap" not in ivgae.evaluate(m, ds, "test", seed=0)


def small_datasets():
    scm = builtin_scm("M1", P)
    return [ancestral_sample(scm, Intervention.parse(r), 400, seed=k) for k, r in enumerate(["X=0", "X=1"])]


def test_training_improves_and_is_deterministic():
    cfg = TrainConfig(steps=150, batch_size=16, lr=3e-3, eval_every=50, eval_rows=100, is_samples=10)
    a, ta = train(m1_model(hidden=8), small_datasets(), cfg)
    b, tb = train(m1_model(hidden=8), small_datasets(), cfg)
    assert ta.final["train_elbo"] > ta.initial_elbo
    assert all(np.array_equal(x, y) for x, y in zip(a.state(), b.state()))
    assert ta.summary() == tb.summary()
    assert a.trained_regimes == ["X=0", "X=1"]
    assert ta.final["test_elbo"] <= ta.final["test_logp"] + 0.05


def test_non_finite_steps_are_counted_and_fail_the_run(monkeypatch):
    def boom(*a, **k):
        raise T.NonFiniteError("injected")

    monkeypatch.setattr(ivgae, "elbo_terms", boom)
    cfg = TrainConfig(steps=50, batch_size=4, nan_patience=5, eval_rows=10)
    monkeypatch.setattr(ivgae, "evaluate", lambda *a, **k: {"elbo": 0.0})
    _, trace = train(m1_model(hidden=4), small_datasets(), cfg)
    assert trace.failed and trace.nan_events == 5 and not trace.final


def test_dataset_mismatch_and_empty_regimes():
    m = IvgaeModel(GraphSpec.from_scm(load_net("cancer")))
    with pytest.raises(T.ShapeError):
        train(m, small_datasets(), TrainConfig(steps=1))
    with pytest.raises(ValueError):
        train(m, [], TrainConfig(steps=1))


def test_checkpoint_roundtrip(tmp_path):
    m = m1_model(seed=5, zero_init_output=False, hidden=8)
    m.trained_regimes = ["X=0"]
    m.save(tmp_path / "m.json", TrainConfig())
    back = IvgaeModel.load(tmp_path / "m.json")
    z = np.random.default_rng(0).standard_normal((3, 4, m.latent_dim))
    assert np.array_equal(back.decode(z, ["X"], {"X": 0}), m.decode(z, ["X"], {"X": 0}))
    assert back.trained_regimes == ["X=0"]
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        IvgaeModel.load(tmp_path / "bad.json")


def test_state_shape_checks():
    m = m1_model()
    state = m.state()
    state[0] = np.zeros((1, 1))
    with pytest.raises(T.ShapeError):
        m.load_state(state)
