import numpy as np
from PIL import Image

from conceptrep.dataset import load_manifest
from conceptrep.pipeline import load_image
from conceptrep.synthetic import SHAPES, generate_corpus, write_corpus


def test_corpus_is_seeded_and_well_formed():
    a = generate_corpus(30, seed=4)
    b = generate_corpus(30, seed=4)
    assert len(SHAPES) == 8
    for x, y in zip(a, b):
        assert x.concepts == y.concepts
        np.testing.assert_array_equal(x.pixels, y.pixels)
        assert x.pixels.shape == (64, 64) and x.pixels.dtype == np.uint8
        assert 2 <= len(x.concepts) <= 4 and set(x.concepts) <= set(SHAPES)
    assert any(not np.array_equal(x.pixels, y.pixels) for x, y in zip(a, generate_corpus(30, seed=5)))


def test_write_corpus_and_decode(tmp_path):
    corpus = generate_corpus(6, seed=0)
    paths = write_corpus(corpus, tmp_path, {"train": slice(0, 4), "test": slice(4, 6)})
    recs = load_manifest(paths["train"], tmp_path / "images")
    assert [r.id for r in recs] == ["img00000.png", "img00001.png", "img00002.png", "img00003.png"]
    img = load_image(recs[0].path)
    assert img.channels == 1
    np.testing.assert_array_equal(img.pixels[:, :, 0], corpus[0].pixels)


def test_load_image_modes(tmp_path):
    Image.new("RGBA", (5, 4), (10, 20, 30, 0)).save(tmp_path / "a.png")
    Image.new("P", (5, 4)).save(tmp_path / "p.png")
    assert load_image(tmp_path / "a.png").pixels.shape == (4, 5, 3)
    assert load_image(tmp_path / "p.png").pixels.shape == (4, 5, 3)
