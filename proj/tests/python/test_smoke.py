import numpy as np
import pytest

import sparsecap

TINY = """
frames = 4
height = 16
width = 16
patch_s = 8
video_width = 8
video_heads = 2
hidden = 16
layers = 1
heads = 2
ffn = 32
text_len = 8
radius = 2
max_speed = 1
steps = 6
batch = 2
train_clips = 6
val_clips = 2
log_interval = 3
eval_interval = 6
"""


def test_identical_corpus_scores():
    caps = ["a red square moves left", "a blue circle moves up"]
    m = sparsecap.score(caps, [[c] for c in caps])
    assert m == {"bleu4": 1.0, "rouge_l": 1.0, "cider_d": 10.0}


def test_generate_clip_is_deterministic():
    a, cap_a = sparsecap.generate_clip(42)
    b, cap_b = sparsecap.generate_clip(42)
    assert a.shape == (8, 64, 64, 3)
    assert np.array_equal(a, b) and cap_a == cap_b
    assert cap_a.startswith("a ")
    assert 0.0 <= a.min() and a.max() <= 1.0


def test_vocab_and_encoding():
    v = sparsecap.build_vocab(["a red square moves left"])
    assert len(v) == 10
    assert sparsecap.encode_caption("a red square", v, 8)[:5] == [2, v.lookup("a"), v.lookup("red"), v.lookup("square"), 3]


def test_mask_tools():
    rng = np.random.default_rng(0)
    m = rng.uniform(size=(16, 16))
    b = sparsecap.binarize(m, (4, 2, 2))
    assert set(np.unique(b)) <= {0.0, 1.0}
    assert np.array_equal(sparsecap.binarize(b, (4, 2, 2)), b)
    assert np.array_equal(sparsecap.interpolate_mask(m, (4, 2, 2), 4), m)
    assert sparsecap.interpolate_mask(m, (4, 2, 2), 8).shape == (32, 32)
    with pytest.raises(sparsecap.DimensionError):
        sparsecap.binarize(m, (2, 2, 2))


def test_train_caption_roundtrip(tmp_path):
    model, log = sparsecap.train(TINY, str(tmp_path / "run"))
    assert [r["step"] for r in log] == [3, 6]
    assert "val_cider" in log[-1]
    assert model.grid == (2, 2, 2)
    mask = model.mask()
    assert mask.shape == (8, 8)
    clip = np.zeros((4, 16, 16, 3), dtype=np.float32)
    caption = model.caption(clip)
    assert "[" not in caption
    model.save(str(tmp_path / "m.bin"))
    again = sparsecap.Model.load(str(tmp_path / "m.bin"))
    assert again.caption(clip) == caption
    assert np.array_equal(again.mask(), mask)


def test_config_errors_surface():
    with pytest.raises(sparsecap.ConfigError):
        sparsecap.train("no_such_key = 1\n")
