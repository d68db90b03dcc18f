import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.integrate import quad

from ocmusic.errors import UndefinedFeatureError
from ocmusic.features import harmony as hm
from ocmusic.io_media import AudioBuffer, MidiScore, Note
from ocmusic.synth import sine

SR = 22050


def chord_score(groups, beat=0.5, bpm=120.0, numerator=4, velocities=None):
    notes = []
    for k, g in enumerate(groups):
        for p in g:
            notes.append(Note(k * beat, beat, p, 100 if velocities is None else velocities[k]))
    return MidiScore(notes, [(0.0, bpm)], [(0.0, numerator, 4)])


# -- timbre -------------------------------------------------------------------


@pytest.mark.parametrize("alpha,b,c,want", [(1, 0.7, -0.2, 0.7), (0, 0.7, -0.2, -0.2), (0.5, 0.6, 0.2, 0.4)])
def test_timbre_harmony_mix(alpha, b, c, want):
    assert hm.timbre_harmony(b, c, alpha) == pytest.approx(want, abs=1e-15)


def test_identical_stems_balance_one():
    s = sine(440, 1.0)
    assert hm.timbre_balance(hm.StemSet.from_buffers([s, s])) == pytest.approx(1.0, abs=1e-12)


def test_disjoint_band_stems_balance_zero():
    stems = hm.StemSet.from_buffers([sine(100, 1.0), sine(6000, 1.0)])
    assert hm.timbre_balance(stems) < 1e-6


def test_hand_energy_example():
    assert hm.balance_from_energies([[4, 1], [2, 2]]) == pytest.approx(0.5, abs=1e-9)


def test_single_stem_is_undefined():
    with pytest.raises(UndefinedFeatureError):
        hm.timbre_balance(hm.StemSet.from_buffers([sine(440, 1.0)]))


def test_complementarity_self_and_antiphase():
    x = sine(440, 0.5)
    assert hm.timbre_complementarity(hm.StemSet([x], x)) == pytest.approx(1.0, abs=1e-12)
    neg = AudioBuffer(-x.samples, SR)
    assert hm.timbre_complementarity(hm.StemSet([neg], x)) == pytest.approx(-1.0, abs=1e-12)


def test_complementarity_orthogonal_sines_vs_integration():
    # 440 and 441 Hz both complete whole cycles in one beat period of 1 s
    a, b = sine(440, 1.0, amplitude=0.4), sine(441, 1.0, amplitude=0.4)
    mix = AudioBuffer(a.samples + b.samples, SR)
    got = hm.timbre_complementarity(hm.StemSet([a, b], mix))
    fa = lambda t: np.sin(2 * np.pi * 440 * t)  # noqa: E731
    fb = lambda t: np.sin(2 * np.pi * 441 * t)  # noqa: E731
    fs = lambda t: fa(t) + fb(t)  # noqa: E731

    def corr(f):
        num = quad(lambda t: f(t) * fs(t), 0, 1, limit=2000)[0]
        den = np.sqrt(quad(lambda t: f(t) ** 2, 0, 1, limit=2000)[0] * quad(lambda t: fs(t) ** 2, 0, 1, limit=2000)[0])
        return num / den

    assert got == pytest.approx((corr(fa) + corr(fb)) / 2, abs=1e-6)


def test_silent_mix_gives_zero():
    z = AudioBuffer(np.zeros(1000), SR)
    assert hm.timbre_complementarity(hm.StemSet([z, z], z)) == 0.0


def test_pseudo_stems_flagged_and_sum_to_mix():
    mix = AudioBuffer(np.random.default_rng(0).uniform(-0.3, 0.3, 4096), SR)
    st_ = hm.pseudo_stems(mix)
    assert st_.degraded and len(st_.stems) == 4
    np.testing.assert_allclose(sum(s.samples for s in st_.stems), mix.samples, atol=1e-9)


energies = st.lists(st.lists(st.floats(0, 1e3), min_size=3, max_size=3), min_size=2, max_size=5)


@given(energies, st.randoms(), st.floats(1e-3, 1e3))
def test_balance_permutation_and_scale_invariant(E, rnd, gain):
    E = np.array(E)
    perm = list(range(len(E)))
    rnd.shuffle(perm)
    b = hm.balance_from_energies(E)
    assert hm.balance_from_energies(E[perm]) == pytest.approx(b, rel=1e-12, abs=1e-15)
    assert hm.balance_from_energies(E * gain) == pytest.approx(b, rel=1e-6, abs=1e-9)


@given(st.floats(0.01, 100), st.integers(0, 100))
def test_complementarity_gain_invariant(gain, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-0.5, 0.5, 512), rng.uniform(-0.5, 0.5, 512)
    base = hm.timbre_complementarity(hm.StemSet([AudioBuffer(a, SR), AudioBuffer(b, SR)], AudioBuffer(a + b, SR)))
    scaled = hm.StemSet([AudioBuffer(gain * a, SR), AudioBuffer(gain * b, SR)], AudioBuffer(gain * (a + b), SR))
    assert hm.timbre_complementarity(scaled) == pytest.approx(base, abs=1e-12)


# -- intervals ----------------------------------------------------------------


def test_unison_piece():
    s = chord_score([[60], [60], [60]])
    assert hm.interval_harmony(s) == pytest.approx(hm.DEFAULT_INTERVAL_WEIGHTS[11])


def test_two_note_fifth():
    s = chord_score([[60], [67]])
    r = hm.interval_ratios(s)
    assert r[6] == 1.0
    assert hm.interval_harmony(s, bias=0.25) == pytest.approx(hm.DEFAULT_INTERVAL_WEIGHTS[6] + 0.25)


def test_four_note_chord_pairs():
    s = chord_score([[60, 64, 67, 72]])
    classes = sorted(hm.interval_class(p - q) for p, q in hm.interval_pairs(s))
    assert classes == [3, 4, 5, 7, 8, 12]
    want = np.mean([hm.DEFAULT_INTERVAL_WEIGHTS[c - 1] for c in classes])
    assert hm.interval_harmony(s) == pytest.approx(want, abs=1e-12)


def test_interval_needs_two_notes():
    with pytest.raises(UndefinedFeatureError):
        hm.interval_harmony(chord_score([[60]]))


def random_scores(max_notes=12):
    note = st.tuples(st.floats(0, 4), st.floats(0.05, 1.5), st.integers(36, 90), st.integers(1, 127))
    return st.lists(note, min_size=2, max_size=max_notes).map(
        lambda ns: MidiScore([Note(o, d, p, v) for o, d, p, v in ns], [(0.0, 120.0)], [(0.0, 4, 4)])
    )


@given(random_scores())
def test_all_ones_weights_give_one(score):
    assume(hm.interval_pairs(score))
    assert hm.interval_harmony(score, weights=np.ones(12)) == pytest.approx(1.0, abs=1e-12)


# -- chords -------------------------------------------------------------------


def test_sustained_triad_is_one_chord():
    s = MidiScore([Note(0, 2.0, p, 90) for p in (60, 64, 67)], [(0.0, 120.0)], [(0.0, 4, 4)])
    seq = hm.extract_chords(s)
    assert [c.pitch_classes for c in seq.chords] == [frozenset({0, 4, 7})]


def test_silent_window_omitted():
    s = MidiScore([Note(0, 2.0, 60, 90), Note(4.0, 2.0, 67, 90)], [(0.0, 120.0)], [(0.0, 4, 4)])
    assert len(hm.extract_chords(s)) == 2


def test_alternating_bars_and_key():
    # bars C G C G C; C voiced C3 C4 E4 G4, G voiced G3 B3 D4, one bar each.
    # Bars holding each class: C 3*2 = 6, G 3+2 = 5, E 3, B 2, D 2 -> key C
    c_bar, g_bar = (48, 60, 64, 67), (55, 59, 62)
    notes = []
    for bar in range(5):
        for p in (c_bar if bar % 2 == 0 else g_bar):
            notes.append(Note(bar * 2.0, 2.0, p, 90))
    seq = hm.extract_chords(MidiScore(notes, [(0.0, 120.0)], [(0.0, 4, 4)]))
    C, G = frozenset({0, 4, 7}), frozenset({7, 11, 2})
    assert [c.pitch_classes for c in seq.chords] == [C, G, C, G, C]
    assert (seq.key, seq.mode) == (0, "major")


def test_repeated_tonic_triads():
    s = chord_score([[60, 64, 67]] * 4, beat=2.0)
    terms = hm.progression_terms(hm.extract_chords(s))
    np.testing.assert_array_equal(terms[:, [0, 1, 2, 5]], 0.0)
    lam = (0.3, 0.2, 0.1, 2.0, 3.0, 0.7)
    c, m = terms[0, 3], terms[0, 4]
    assert hm.chord_progression_harmony(hm.extract_chords(s), lam) == pytest.approx(2.0 * c + 3.0 * m)


def test_c_to_g_hand_value():
    s = chord_score([[60, 64, 67], [55, 59, 62]], beat=2.0)
    seq = hm.extract_chords(s)
    seq.key, seq.mode = 0, "major"
    d1 = 1 - 1 / 5  # {0,4,7} vs {7,11,2}
    d2 = 1 - 1 / 5
    d3 = 1 / 6  # G is one fifth from C
    c = 0.0  # G major triad has no dissonant pair
    m = 5 / 12  # soprano G4 -> D4
    h = 0.0  # dominant is a functional triad
    assert hm.chord_progression_harmony(seq) == pytest.approx(d1 + d2 + d3 + c + m + h, abs=1e-12)
    assert hm.chord_progression_harmony(seq) == pytest.approx(2.183333333, abs=1e-8)


def test_cluster_dissonance():
    assert hm.chord_dissonance(frozenset({0, 1, 2})) == 1.0


def test_progression_needs_two_chords():
    with pytest.raises(UndefinedFeatureError):
        hm.chord_progression_harmony(hm.extract_chords(chord_score([[60, 64, 67]])))


@given(random_scores(10), st.integers(-6, 6))
def test_progression_transposition_invariant(score, k):
    assume(all(36 <= n.pitch + k <= 96 for n in score.notes))
    seq = hm.extract_chords(score)
    assume(len(seq) >= 2)
    moved = MidiScore([Note(n.onset, n.duration, n.pitch + k, n.velocity) for n in score.notes], score.tempo_map, score.time_signatures)
    seq2 = hm.extract_chords(moved)
    # the key follows the transposition unless the duration argmax is tied
    hist = np.zeros(12)
    for n in score.notes:
        hist[n.pitch % 12] += n.duration
    assume(np.sum(hist == hist.max()) == 1)
    assume(hist[(seq.key + 4) % 12] != hist[(seq.key + 3) % 12])
    assert seq2.key == (seq.key + k) % 12
    assert hm.chord_progression_harmony(seq2) == pytest.approx(hm.chord_progression_harmony(seq), abs=1e-12)


# -- dynamics -----------------------------------------------------------------


def test_one_bar_grid():
    s = chord_score([[60]] * 4)
    g = hm.metrical_grid(s)
    np.testing.assert_allclose(g.beat_times, [0, 0.5, 1.0, 1.5])
    assert g.weights.tolist() == [4, 1, 2, 1]


def test_three_four_weights():
    assert hm.beat_weights(3) == [3, 1, 1]
    s = chord_score([[60]] * 3, numerator=3)
    assert hm.metrical_grid(s).weights.tolist() == [3, 1, 1]


def test_grid_follows_tempo_change():
    # 120 bpm for beats 0-1, 60 bpm afterwards: beats at 0, .5, 1.0, 2.0
    notes = [Note(t, 0.4, 60, 80) for t in (0, 0.5, 1.0, 2.0)]
    s = MidiScore(notes, [(0.0, 120.0), (1.0, 60.0)], [(0.0, 4, 4)])
    g = hm.metrical_grid(s)
    np.testing.assert_allclose(g.beat_times, [0.0, 0.5, 1.0, 2.0])


def test_proportional_velocities_give_one():
    s = chord_score([[60]] * 8, velocities=[100, 25, 50, 25] * 2)
    assert hm.dynamic_harmony(s) == pytest.approx(1.0, abs=1e-12)


def test_dynamic_cosine_examples():
    assert hm.cosine([1, 0], [0, 1]) == 0.0
    want = 680 / (np.sqrt(23600) * np.sqrt(22))
    assert hm.cosine([100, 60, 80, 60], [4, 1, 2, 1]) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.94372, abs=1e-5)


def test_no_aligned_notes():
    s = MidiScore([Note(0.2, 0.1, 60, 90)], [(0.0, 120.0)], [(0.0, 4, 4)])
    with pytest.raises(UndefinedFeatureError):
        hm.dynamic_harmony(s)


@given(st.lists(st.integers(1, 127), min_size=4, max_size=16))
def test_dynamic_harmony_bounds_and_equality_case(vels):
    s = chord_score([[60]] * len(vels), velocities=vels)
    v = hm.dynamic_harmony(s)
    assert -1.0 <= v <= 1.0
    D, M = hm.aligned_dynamics(s, hm.metrical_grid(s))
    proportional = np.allclose(D / D.sum(), M / M.sum(), rtol=0, atol=1e-12)
    if proportional:
        assert v == pytest.approx(1.0, abs=1e-12)
    if v == 1.0:
        assert np.allclose(D / D.sum(), M / M.sum(), rtol=0, atol=1e-6)
