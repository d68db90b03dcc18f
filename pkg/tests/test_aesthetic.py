import numpy as np
import pytest
from conftest import rel_err
from hypothesis import given
from hypothesis import strategies as st

from ocmusic import synth
from ocmusic.aesthetic import model as am
import importlib

at = importlib.import_module("ocmusic.aesthetic.train")  # the package re-exports a train() function
from ocmusic.aesthetic.basic import FEATURE_NAMES, SYMBOLIC, BasicFeatureVector, extract_basic_features
from ocmusic.errors import ConfigurationError, DegenerateDenominatorError, ModelFormatError, TrainingError
from ocmusic.features.harmony import StemSet
from ocmusic.io_media import MidiScore

FAST = at.TrainConfig(lr=0.05, iterations=300, head_iterations=200)
# the library default (lr 5e-5, 1000 steps) barely moves the quotient; this
# schedule lets stage 2 converge on the synthetic set
CONVERGED = at.TrainConfig(lr=0.05, iterations=2000)


# -- extraction ---------------------------------------------------------------


@pytest.fixture(scope="module")
def ideal():
    score = synth.ideal_score()
    return score, synth.render(score)


def test_audio_only_has_six_features(ideal):
    _, audio = ideal
    fv = extract_basic_features(audio)
    assert fv.mask().sum() == 6
    for name in SYMBOLIC:
        assert not fv.available[name] and np.isnan(fv.values[name])
    assert "timbre_harmony" in fv.degraded and "timbre_variability" in fv.degraded


def test_full_triple_has_ten_features(ideal):
    score, audio = ideal
    roots = MidiScore([n for n in score.notes if n.pitch < 58], score.tempo_map, score.time_signatures)
    upper = MidiScore([n for n in score.notes if n.pitch >= 58], score.tempo_map, score.time_signatures)
    stems = StemSet.from_buffers([synth.render(roots), synth.render(upper)])
    fv = extract_basic_features(audio, score, stems)
    assert fv.mask().sum() == 10
    assert fv.degraded == frozenset()


def test_ideal_track_dynamic_and_symmetry(ideal):
    score, audio = ideal
    fv = extract_basic_features(audio, score)
    assert fv.dynamic_harmony > 0.95
    assert fv.self_similarity_fitness > 0.8


def test_feature_vector_rejects_nonfinite_available():
    with pytest.raises(ValueError):
        BasicFeatureVector({"timbre_harmony": float("inf")}, {"timbre_harmony": True})


# -- heads and quotient -------------------------------------------------------


def heads_with(weights=None, bias=0.0):
    weights = weights or {}
    return {h: am.LRHeadParams(weights.get(h, np.zeros(len(am.GROUPS[h]))), bias) for h in am.HEADS}


def test_zero_heads_give_half():
    A = am.head_outputs(np.random.default_rng(0).normal(size=(3, 10)), heads_with())
    np.testing.assert_array_equal(A, 0.5)


def test_head_saturation():
    Z = np.zeros((1, 10))
    Z[0, am.GROUP_INDEX["H"][0]] = 1e3
    A = am.head_outputs(Z, heads_with({"H": [1.0, 0, 0, 0]}))
    assert A[0, 0] == 1.0


def test_hand_set_head():
    Z = np.zeros((1, 10))
    Z[0, am.GROUP_INDEX["H"][0]] = 0.5
    A = am.head_outputs(Z, heads_with({"H": [1.0, 0, 0, 0]}))
    assert A[0, 0] == pytest.approx(1 / (1 + np.exp(-0.5)), abs=1e-15)
    assert round(A[0, 0], 4) == 0.6225


def test_quotient_examples():
    oc = am.OCParams(np.ones(4), [0.0, 1.0])
    assert am.birkhoff_score(am.AestheticFeatures(0.5, 0.5, 0.0, 0.0), oc) == 1.0
    oc2 = am.OCParams([2.0, 1.0, 1.0, 1.0], [0.0, 0.5])
    assert am.birkhoff_score(am.AestheticFeatures(0.8, 0.6, 0.3, 0.2), oc2) == pytest.approx(2.2, abs=1e-12)


def test_doubling_numerator_doubles_measure():
    aes = am.AestheticFeatures(0.7, 0.2, 0.4, 0.1)
    a = am.birkhoff_score(aes, am.OCParams([1.0, 2.0, 1.0, 1.0], [0.3, 1.0]))
    b = am.birkhoff_score(aes, am.OCParams([2.0, 4.0, 1.0, 1.0], [0.6, 1.0]))
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_denominator_guard():
    with pytest.raises(DegenerateDenominatorError):
        am.birkhoff_score(am.AestheticFeatures(1, 1, 0, 0), am.OCParams(np.ones(4), [0.0, 5e-4]))


def test_classify_thresholds():
    oc = am.OCParams(tau=[1.0, 2.0])
    assert am.classify(0.5, oc) == "negative"
    assert am.classify(1.0, oc) == "medium"
    assert am.classify(2.0, oc) == "positive"
    assert am.classify(2.5, oc) == "positive"
    with pytest.raises(ValueError):
        am.classify(float("nan"), oc)
    with pytest.raises(ValueError):
        am.OCParams(tau=[2.0, 1.0])


unit = st.floats(0.0, 1.0)
pos = st.floats(0.1, 5.0)


@given(unit, unit, unit, unit, st.floats(1e-3, 0.5), st.tuples(pos, pos, pos, pos), pos)
def test_monotone_in_h_and_c(H, S, C, R, eps, w, t2):
    oc = am.OCParams(list(w), [0.1, t2])
    base = am.birkhoff_score(am.AestheticFeatures(H, S, C, R), oc)
    assert am.birkhoff_score(am.AestheticFeatures(H + eps, S, C, R), oc) > base
    assert am.birkhoff_score(am.AestheticFeatures(H, S, C + eps, R), oc) < base


@given(st.lists(st.tuples(unit, unit, unit, unit), min_size=1, max_size=20), st.floats(0.1, 10.0))
def test_joint_numerator_threshold_scaling_keeps_classes(rows, k):
    A = np.array(rows)
    oc = am.OCParams([1.0, 0.5, 1.0, 2.0], [0.2, 1.0], [0.6, 1.1])
    scaled = am.OCParams(oc.omega * [k, k, 1, 1], oc.theta * [k, 1], oc.tau * k)
    a = am.classify_codes(am.measures(A, oc), oc)
    b = am.classify_codes(am.measures(A, scaled), scaled)
    # values sitting within rounding of a threshold may flip; none do here
    m = am.measures(A, oc)
    safe = np.min(np.abs(m[:, None] - oc.tau[None, :]), axis=1) > 1e-9
    np.testing.assert_array_equal(a[safe], b[safe])


# -- stage-2 gradients --------------------------------------------------------


def finite_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


@given(st.integers(0, 10_000))
def test_ordinal_loss_gradient_check(seed):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.05, 0.95, size=(12, 4))
    y = rng.integers(0, 3, size=12)
    omega = rng.uniform(0.5, 2.0, 4)
    theta = np.array([rng.uniform(-0.2, 0.2), rng.uniform(0.5, 1.5)])
    tau = np.sort(rng.uniform(0.3, 2.0, 2)) + [0, 0.2]
    _, g = at.ordinal_loss(omega, theta, tau, A, y)
    checks = {
        "omega": finite_diff(lambda v: at.ordinal_loss(v, theta, tau, A, y, False)[0], omega),
        "theta": finite_diff(lambda v: at.ordinal_loss(omega, v, tau, A, y, False)[0], theta),
        "tau": finite_diff(lambda v: at.ordinal_loss(omega, theta, v, A, y, False)[0], tau),
        "A": finite_diff(lambda v: at.ordinal_loss(omega, theta, tau, v, y, False)[0] * len(y), A) / len(y),
    }
    for k, num in checks.items():
        assert rel_err(g[k], num) < 1e-4, k


def test_head_loss_gradient_check():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(20, 3))
    t = rng.integers(0, 2, 20).astype(float)
    params = {"w": rng.normal(size=3), "b": np.array(0.3)}
    _, g = at.bce_head_loss(params, Z, t, 0.1)
    num_w = finite_diff(lambda v: at.bce_head_loss({"w": v, "b": params["b"]}, Z, t, 0.1)[0], params["w"])
    num_b = finite_diff(lambda v: at.bce_head_loss({"w": params["w"], "b": v}, Z, t, 0.1)[0], params["b"].reshape(1))
    assert rel_err(g["w"], num_w) < 1e-6 and rel_err(g["b"], num_b) < 1e-6


# -- training -----------------------------------------------------------------


@pytest.fixture(scope="module")
def synthetic():
    return at.synthetic_dataset(n_per_class=40, seed=1)


def test_init_thresholds_oracle():
    # brute-force over all candidate pairs
    rng = np.random.default_rng(7)
    for _ in range(30):
        m = np.round(rng.normal(size=15), 1)
        y = rng.integers(0, 3, 15)
        tau = at.init_thresholds(m, y)
        s = np.unique(m)
        cands = [s[0] - 1] + list((s[1:] + s[:-1]) / 2) + [s[-1] + 1]
        best = max(np.mean(((m >= a).astype(int) + (m >= b)) == y) for i, a in enumerate(cands) for b in cands[i:])
        got = np.mean(((m >= tau[0]).astype(int) + (m >= tau[1])) == y)
        assert got == best


def test_train_separable_and_deterministic():
    data = at.synthetic_dataset(n_per_class=100, seed=3)
    r1 = at.train(data, CONVERGED)
    r2 = at.train(data, CONVERGED)
    assert r1.metrics["test"]["accuracy"] >= 0.95
    assert r1.model.to_json() == r2.model.to_json()
    assert r1.metrics == r2.metrics


def test_stage2_returns_lowest_loss_iterate():
    data = at.synthetic_dataset(n_per_class=30, seed=2)
    r = at.train(data, at.TrainConfig(lr=0.05, iterations=400))
    X, y = at.as_arrays(data)
    tr, _ = at.stratified_split(y, 0.3, 0)
    Z, _ = r.model.normalizer.transform(X[tr])
    A = am.head_outputs(Z, r.model.heads)
    oc = r.model.oc
    loss, _ = at.ordinal_loss(oc.omega, oc.theta, oc.tau, A, y[tr], False)
    assert len(r.oc_history) == 401
    assert loss == min(r.oc_history)


def test_default_config_matches_published_schedule():
    c = at.TrainConfig()
    assert (c.lr, c.iterations) == (5e-5, 1000)


def test_single_class_raises():
    data = [(fv, "positive") for fv, _ in at.synthetic_dataset(5)]
    with pytest.raises(TrainingError):
        at.train(data, FAST)


def test_ablate_empty_drop_equals_full(synthetic):
    full = at.train(synthetic, FAST).metrics["test"]
    abl = at.ablate(synthetic, FAST, drop=())
    assert abl["drop"] == [] and {k: abl[k] for k in full} == full


def test_ablate_rejects_bad_drops(synthetic):
    for drop in [{"H", "S"}, {"C", "R"}, {"X"}]:
        with pytest.raises(ConfigurationError):
            at.ablate(synthetic, FAST, drop=drop)


def test_stratified_split_is_stratified():
    y = np.array([0] * 10 + [1] * 20 + [2] * 30)
    tr, te = at.stratified_split(y, 0.3, 0)
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(60))
    assert np.bincount(y[te]).tolist() == [3, 6, 9]


def test_macro_f1_hand_value():
    y = np.array([0, 0, 1, 1, 2, 2])
    p = np.array([0, 1, 1, 1, 2, 0])
    # per class F1: 2/(2+1+1)=0.5, 4/(4+1)=0.8, 2/(2+0+1)=2/3
    assert at.macro_f1(y, p) == pytest.approx((0.5 + 0.8 + 2 / 3) / 3)


def test_normalizer_drops_constant_and_missing():
    X = np.random.default_rng(0).normal(size=(10, 10))
    X[:, 2] = 4.0
    X[:, 5] = np.nan
    n = am.FeatureNormalizer.fit(X)
    assert not n.active[2] and not n.active[5]
    Z, imputed = n.transform(X)
    assert not Z[:, [2, 5]].any() and imputed[:, 5].all()


# -- persistence --------------------------------------------------------------


def test_model_json_round_trip(synthetic, tmp_path):
    model = at.train(synthetic, FAST).model
    path = tmp_path / "m.json"
    model.save(path)
    back = am.AestheticModel.load(path)
    assert back.to_json() == model.to_json()
    X = np.array([fv.as_array() for fv, _ in synthetic[:5]])
    np.testing.assert_array_equal(back.aesthetic_batch(X), model.aesthetic_batch(X))


def test_model_format_errors(synthetic):
    d = at.train(synthetic, FAST).model.to_dict()
    import json

    for mutate in (lambda d: d.update(version=99), lambda d: d.update(format="x"), lambda d: d["heads"]["H"].update(weights=[1.0])):
        bad = json.loads(json.dumps(d))
        mutate(bad)
        with pytest.raises(ModelFormatError):
            am.AestheticModel.from_json(json.dumps(bad))
    with pytest.raises(ModelFormatError):
        am.AestheticModel.from_json("{not json")


def test_feature_names_are_ten():
    assert len(FEATURE_NAMES) == 10 and sum(len(v) for v in am.GROUPS.values()) == 10
