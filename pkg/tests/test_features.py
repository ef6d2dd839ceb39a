import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advguard.errors import ConfigurationError, DimensionError, IngestionError
from advguard.features import (
    EmbeddingParams,
    FeatureMatrix,
    SsimParams,
    build_feature_matrix,
    extract_features,
    fallback_embedding,
    histogram_features,
    ingest_embeddings,
    load_feature_matrix,
    save_feature_matrix,
    ssim_column_names,
    ssim_features,
    ssim_map,
)
from advguard.imaging import (
    CorpusManifest,
    CorpusSpec,
    CropBox,
    GrayImage,
    ManifestEntry,
    generate_corpus,
    save_image,
    white_reference,
)

P = SsimParams()


def rand_img(seed, w=16, h=16):
    return GrayImage(np.random.default_rng(seed).uniform(size=(h, w)))


def test_ssim_equal_images_all_ones_exact():
    img = rand_img(0)
    s = ssim_map(img, img, P)
    assert np.all(s == 1.0)


def test_ssim_zero_vs_white_closed_form():
    img = GrayImage(np.zeros((16, 16)))
    ref = white_reference(16, 16)
    s = ssim_map(img, ref, P)
    expected = P.c1 / (1.0 + P.c1)
    assert np.max(np.abs(s - expected)) < 1e-12
    assert expected == pytest.approx(9.999e-5, rel=1e-3)


def test_ssim_mean_symmetric():
    a, b = rand_img(1), rand_img(2)
    assert ssim_features(a, b, P)[-1] == pytest.approx(ssim_features(b, a, P)[-1], abs=1e-12)


def test_ssim_feature_length_and_names():
    # 40x369 at window 8 stride 8: 5 x 46 windows plus the mean
    img = GrayImage(np.full((369, 40), 0.5))
    row = ssim_features(img, white_reference(40, 369), P)
    assert row.shape == (231,)
    names = ssim_column_names(40, 369, P)
    assert len(names) == 231 and names[-1] == "ssim_mean"


def test_ssim_map_in_range():
    for seed in range(5):
        s = ssim_map(rand_img(seed), rand_img(seed + 100), P)
        assert np.all(s >= -1.0 - 1e-12) and np.all(s <= 1.0 + 1e-12)


def test_ssim_darkening_decreases_mean_against_white():
    ref = white_reference(16, 16)
    bright = GrayImage(np.full((16, 16), 1.0))
    darker = GrayImage(np.full((16, 16), 0.9))
    darkest = GrayImage(np.full((16, 16), 0.7))
    m = [ssim_features(im, ref, P)[-1] for im in (bright, darker, darkest)]
    assert m[0] > m[1] > m[2]


def test_ssim_dimension_mismatch():
    with pytest.raises(DimensionError):
        ssim_map(rand_img(0, 8, 8), white_reference(9, 8), P)


def test_ssim_window_too_large():
    with pytest.raises(DimensionError):
        ssim_map(rand_img(0, 4, 4), white_reference(4, 4), P)


def test_ssim_overlapping_stride_matches_block_path():
    # stride < window goes through the sliding-window path; a full-stride
    # call must agree with it on the shared grid
    img, ref = rand_img(3), rand_img(4)
    dense = ssim_map(img, ref, SsimParams(window=8, stride=1))
    coarse = ssim_map(img, ref, SsimParams(window=8, stride=8))
    np.testing.assert_allclose(dense[::8, ::8], coarse, atol=1e-12)


def test_histogram_direct_count():
    img = GrayImage(np.array([[0.0, 0.0], [1.0, 128 / 255]]))
    h = histogram_features(img)
    assert h[0] == 0.5 and h[255] == 0.25 and h[128] == 0.25
    assert h.sum() == pytest.approx(1.0, abs=1e-9)


def test_histogram_all_white():
    h = histogram_features(GrayImage(np.ones((4, 4))))
    assert h[255] == 1.0 and h[:255].sum() == 0.0


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_histogram_normalized_and_nonnegative(seed):
    h = histogram_features(rand_img(seed, 6, 5))
    assert np.all(h >= 0)
    assert abs(h.sum() - 1.0) < 1e-9


def test_fallback_embedding_deterministic():
    img = rand_img(7)
    a = fallback_embedding(img, dim=32, seed=5)
    b = fallback_embedding(img, dim=32, seed=5)
    assert np.array_equal(a, b)
    c = fallback_embedding(img, dim=32, seed=6)
    assert not np.array_equal(a, c)


def test_fallback_embedding_default_width():
    assert fallback_embedding(rand_img(8), seed=0).shape == (512,)


def test_fallback_embedding_zero_image():
    z = fallback_embedding(GrayImage(np.zeros((16, 16))), dim=16, seed=1)
    assert np.array_equal(z, np.zeros(16))


def test_fallback_embedding_too_small():
    with pytest.raises(DimensionError):
        fallback_embedding(GrayImage(np.zeros((4, 4))), dim=8)


def _make_manifest(tmp_path, n=3):
    entries = []
    for i in range(n):
        img = GrayImage(np.full((8, 8), i / 255))
        save_image(img, tmp_path / f"im{i}.png")
        entries.append(ManifestEntry(f"im{i}", f"im{i}.png", "clean", "original"))
    return CorpusManifest(entries, root=tmp_path)


def test_ingest_embeddings_round(tmp_path):
    manifest = _make_manifest(tmp_path)
    (tmp_path / "emb.csv").write_text("id,e0,e1\nim2,5.0,6.0\nim0,1.0,2.0\nim1,3.0,4.0\n")
    fm = ingest_embeddings(tmp_path / "emb.csv", manifest)
    assert fm.row_ids == ["im0", "im1", "im2"]
    np.testing.assert_array_equal(fm.values, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])


def test_ingest_embeddings_row_count_mismatch(tmp_path):
    manifest = _make_manifest(tmp_path)
    (tmp_path / "emb.csv").write_text("id,e0\nim0,1.0\nim1,2.0\n")
    with pytest.raises(IngestionError, match="2 embedding rows"):
        ingest_embeddings(tmp_path / "emb.csv", manifest)


def test_ingest_embeddings_nan_rejected(tmp_path):
    manifest = _make_manifest(tmp_path)
    (tmp_path / "emb.csv").write_text("id,e0\nim0,1.0\nim1,NaN\nim2,2.0\n")
    with pytest.raises(IngestionError, match="line 3"):
        ingest_embeddings(tmp_path / "emb.csv", manifest)


def test_ingest_embeddings_id_mismatch(tmp_path):
    manifest = _make_manifest(tmp_path)
    (tmp_path / "emb.csv").write_text("id,e0\nim0,1.0\nim1,2.0\nimX,3.0\n")
    with pytest.raises(IngestionError, match="im2"):
        ingest_embeddings(tmp_path / "emb.csv", manifest)


def test_build_feature_matrix_histogram_shape(tmp_path):
    boxes = {"cropped_v1": CropBox(20, 0, 30, 48), "cropped_v2": CropBox(20, 10, 30, 38)}
    manifest = generate_corpus(
        CorpusSpec(count=6, width=64, height=48, seed=1), tmp_path, boxes
    )
    fm = build_feature_matrix(manifest, "histogram", root=tmp_path, crop_boxes=boxes)
    assert fm.values.shape == (6, 256)
    assert fm.row_ids == manifest.ids()


def test_build_feature_matrix_unknown_family(tmp_path):
    manifest = _make_manifest(tmp_path)
    with pytest.raises(ConfigurationError):
        build_feature_matrix(manifest, "wavelets")


def test_build_feature_matrix_embedding_source(tmp_path):
    manifest = _make_manifest(tmp_path)
    (tmp_path / "emb_original.csv").write_text("id,e0\nim0,1.0\nim1,2.0\nim2,3.0\n")
    fm = build_feature_matrix(
        manifest,
        "embeddings",
        embedding_params=EmbeddingParams(dim=1, source=str(tmp_path / "emb_{variant}.csv")),
        root=tmp_path,
        variant="original",
    )
    assert fm.values.ravel().tolist() == [1.0, 2.0, 3.0]


def test_feature_matrix_rejects_nonfinite():
    with pytest.raises(ValueError):
        FeatureMatrix("histogram", ["a"], np.array([[np.inf]]), ["x"])


def test_feature_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    fm = FeatureMatrix(
        "ssim", ["c0", "c1", "c2"], rng.standard_normal((4, 3)), [f"r{i}" for i in range(4)]
    )
    save_feature_matrix(fm, tmp_path / "f.csv")
    loaded = load_feature_matrix(tmp_path / "f.csv")
    assert loaded.family == fm.family
    assert loaded.column_names == fm.column_names
    assert loaded.row_ids == fm.row_ids
    assert np.array_equal(loaded.values, fm.values)


def test_extract_features_pure():
    imgs = [rand_img(1), rand_img(2)]
    a = extract_features(["a", "b"], imgs, "ssim")
    b = extract_features(["a", "b"], imgs, "ssim")
    assert np.array_equal(a.values, b.values)
