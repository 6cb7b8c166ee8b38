import numpy as np
import pytest

import omad

RD = """# co2a0000364.rd
# 120 trials, 64 chans, 416 samples 368 post_stim samples
# 3.906000 msecs uV
# S1 obj , trial 0
# FP1 chan 0
0 FP1 0 -8.921
0 FP1 1 -8.433
0 FP1 2 -2.574
0 FP1 3 5.239
"""


def test_parse_rd():
    rec = omad.parse_rd(RD)
    assert rec["subject_id"] == "co2a0000364"
    assert rec["group"] == "Alcoholic"
    assert rec["channels"] == ["FP1"]
    np.testing.assert_allclose(rec["data"][0], [-8.921, -8.433, -2.574, 5.239])


def test_parse_error_is_raised():
    with pytest.raises(omad.OmadError):
        omad.parse_rd("not a recording\n")


def test_windows_and_features():
    x = np.sin(2 * np.pi * 10 * np.arange(1280) / 256.0)
    assert len(omad.make_windows(x)) == 47
    names = omad.feature_names()
    feats = omad.extract_features(x[:128], 256.0)
    assert len(feats) == len(names) == 12
    bands = dict(zip(names, feats))
    assert bands["alpha"] == max(bands[b] for b in ("delta", "theta", "alpha", "beta", "gamma"))


def test_notch_passes_dc():
    y = omad.notch_filter(np.ones(4096), 256.0)
    assert abs(y[-1] - 1.0) < 1e-9


def test_welch_fixture():
    t, p, df = omad.welch_t([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert t == -1.0 and df == 8.0
    assert p == pytest.approx(0.34659350708733416, abs=1e-6)


def test_mask_and_schedule():
    mask = omad.compute_mask(np.array([0.5, -0.1, 2.0, 0.05], dtype=np.float32), 0.5)
    assert mask.tolist() == [1, 0, 1, 0]
    assert omad.sparsity_at(50, 0.0, 0.5, 0, 100) == pytest.approx(0.4375)


def test_network_roundtrip_and_pruning():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 16)).astype(np.float32)
    y = (x[:, 0] > 0).astype(int).tolist()
    net = omad.main_mlp(16, dropout=0.0, seed=1, widths=[32, 16])
    log = net.fit(x, y, epochs=60, batch_size=32)
    assert log[-1].accuracy > 0.9
    net.prune(0.5)
    assert net.sparsity == pytest.approx(0.5, abs=0.01)
    np.testing.assert_allclose(net.sparse_forward(x), net.predict_proba(x), atol=1e-6)
    back = omad.Network.from_bytes(net.to_bytes("sparse"))
    np.testing.assert_array_equal(back.predict_proba(x), net.predict_proba(x))
    assert len(net.to_bytes("sparse")) < len(net.to_bytes("dense"))
    assert net.latency_ms(sparse=True, reps=3) > 0.0


def test_artifact_corpus():
    corpus = omad.generate_artifact_corpus(subjects=1, trials_per_kind=1, seed=2)
    assert len(corpus) == 2
    assert corpus[0]["data"].shape == (14, 1280)
