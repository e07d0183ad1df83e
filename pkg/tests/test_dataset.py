import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from botgan import dataset as ds
from botgan.errors import (BadCovariance, ClassTooSmall, EmptyDataset, MissingColumn,
                           NonNumericCell, SchemaMismatch, UnknownCategory, UnknownLabel,
                           WidthMismatch)

SMALL = ds.FeatureSchema((("content", 3), ("user", 2)))
AB = ds.ClassMap(("A", "B"))


def _write(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


def _records(n, k=2, seed=0):
    rng = np.random.default_rng(seed)
    return ds.Dataset(SMALL, ds.ClassMap.generic(k), rng.standard_normal((n, 5)),
                      rng.integers(0, k, n))


def test_default_schema_and_classes():
    s = ds.FeatureSchema()
    assert s.total_width == 310
    assert s.columns()[:2] == ["content_0", "content_1"]
    assert s.columns()[-1] == "hashtag_12"
    assert s.category_slice("sentiment") == slice(182, 240)
    assert ds.ClassMap().k == 6 and "other" not in ds.ClassMap().labels
    assert ds.ClassMap(ds.FULL_LABELS).k == 7
    with pytest.raises(UnknownCategory):
        s.category_slice("network")


def test_proportional_schema_widths():
    assert [w for _, w in ds.FeatureSchema.proportional(20).categories] == [12, 3, 2, 2, 1]
    assert ds.FeatureSchema.proportional(310) == ds.FeatureSchema()


def test_schema_digest_changes_with_layout():
    assert SMALL.digest() != ds.FeatureSchema((("content", 2), ("user", 3))).digest()


def test_csv_roundtrip(tmp_path):
    d = _records(12)
    path = ds.write_csv(d, tmp_path / "d.csv")
    back = ds.load_csv(path, SMALL, ds.ClassMap.generic(2))
    assert back.equals(d)


def test_csv_roundtrip_with_provenance(tmp_path):
    d = _records(5).with_provenance("acgan")
    back = ds.load_csv(ds.write_csv(d, tmp_path / "d.csv", provenance=True), SMALL,
                       ds.ClassMap.generic(2))
    assert set(back.provenance) == {"acgan"}


def test_header_only_is_empty(tmp_path):
    path = _write(tmp_path / "e.csv", SMALL.columns() + ["label"], [])
    assert len(ds.load_csv(path, SMALL, AB)) == 0


def test_non_numeric_cell_position(tmp_path):
    rows = [[0.1 * i] * 5 + ["A"] for i in range(12)]
    rows[7][3] = "abc"
    path = _write(tmp_path / "bad.csv", SMALL.columns() + ["label"], rows)
    with pytest.raises(NonNumericCell) as info:
        ds.load_csv(path, SMALL, AB)
    assert (info.value.row, info.value.col) == (7, 3)


def test_load_errors(tmp_path):
    with pytest.raises(MissingColumn):
        ds.load_csv(_write(tmp_path / "a.csv", SMALL.columns(), [[1] * 5]), SMALL, AB)
    with pytest.raises(WidthMismatch):
        ds.load_csv(_write(tmp_path / "b.csv", SMALL.columns()[:4] + ["label"], [[1] * 4 + ["A"]]),
                    SMALL, AB)
    with pytest.raises(WidthMismatch) as info:
        ds.load_csv(_write(tmp_path / "c.csv", SMALL.columns() + ["label"],
                           [[1] * 5 + ["A"], [1] * 4 + ["A"]]), SMALL, AB)
    assert info.value.row == 1
    with pytest.raises(UnknownLabel):
        ds.load_csv(_write(tmp_path / "d.csv", SMALL.columns() + ["label"], [[1] * 5 + ["C"]]),
                    SMALL, AB)
    with pytest.raises(NonNumericCell):
        ds.load_csv(_write(tmp_path / "e.csv", SMALL.columns() + ["label"], [[1, 2, "nan", 4, 5, "A"]]),
                    SMALL, AB)


def test_dataset_is_read_only():
    d = _records(4)
    with pytest.raises(ValueError):
        d.features[0, 0] = 1.0


def test_stratified_split_counts():
    y = np.array([0] * 60 + [1] * 40)
    d = ds.Dataset(SMALL, AB, np.zeros((100, 5)), y)
    train, test = ds.stratified_split(d, 0.75, seed=1)
    assert train.class_counts().tolist() == [45, 30]
    assert test.class_counts().tolist() == [15, 10]


def test_stratified_split_round_half_up():
    d = ds.Dataset(SMALL, AB, np.zeros((10, 5)), np.array([0] * 2 + [1] * 8))
    train, _ = ds.stratified_split(d, 0.75, 0)
    # 1.5 -> 2, clamped to leave one test record; 6.0 -> 6
    assert train.class_counts().tolist() == [1, 6]


def test_stratified_split_errors():
    d = ds.Dataset(SMALL, AB, np.zeros((3, 5)), np.array([0, 0, 1]))
    with pytest.raises(ClassTooSmall):
        ds.stratified_split(d, 0.75, 0)
    with pytest.raises(ValueError):
        ds.stratified_split(d, 1.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 40), min_size=2, max_size=4), st.floats(0.05, 0.95),
       st.integers(0, 2**31 - 1))
def test_split_partitions_input(counts, frac, seed):
    k = len(counts)
    y = np.repeat(np.arange(k), counts)
    x = np.arange(y.size * 5, dtype=float).reshape(-1, 5)
    d = ds.Dataset(SMALL, ds.ClassMap.generic(k), x, y)
    train, test = ds.stratified_split(d, frac, seed)
    ids = np.concatenate([train.features[:, 0], test.features[:, 0]])
    assert sorted(ids.tolist()) == x[:, 0].tolist()
    for c, n in enumerate(counts):
        assert abs(train.class_counts()[c] - frac * n) <= 1
    again, _ = ds.stratified_split(d, frac, seed)
    assert again.equals(train)


def test_standardizer_examples():
    x = np.column_stack([np.full(2, 5.0), [0.0, 2.0], np.zeros(2), np.zeros(2), np.zeros(2)])
    d = ds.Dataset(SMALL, AB, x, [0, 1])
    s = ds.fit_standardizer(d)
    z = ds.transform(s, d).features
    assert s.std[0] == 1.0 and np.all(z[:, 0] == 0)
    assert s.mean[1] == 1.0 and s.std[1] == 1.0 and z[:, 1].tolist() == [-1.0, 1.0]
    with pytest.raises(EmptyDataset):
        ds.fit_standardizer(d.subset([]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e6))
def test_standardizer_roundtrip(seed, scale):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((20, 5)) * scale + rng.standard_normal(5) * scale
    d = ds.Dataset(SMALL, AB, x, rng.integers(0, 2, 20))
    s = ds.fit_standardizer(d)
    z = ds.transform(s, d)
    assert np.all(np.abs(z.features.mean(axis=0)) < 1e-6)
    assert np.all(np.abs(z.features.std(axis=0) - 1) < 1e-6)
    back = ds.inverse_transform(s, z).features
    assert np.all(np.abs(back - x) < 1e-9 * (1 + np.abs(x)))


def test_augment():
    base, synth = _records(100), _records(200, seed=1).with_provenance("cgan")
    out = ds.augment(base, synth)
    assert len(out) == 300 and (out.provenance == "original").sum() == 100
    assert ds.augment(base, ds.Dataset.empty(SMALL, ds.ClassMap.generic(2))).equals(base)
    other = ds.Dataset(ds.FeatureSchema.proportional(5), ds.ClassMap.generic(2),
                       np.zeros((1, 5)), [0])
    with pytest.raises(SchemaMismatch):
        ds.augment(base, other)


def test_expansion_counts():
    d = ds.Dataset(SMALL, AB, np.zeros((14, 5)), [0] * 10 + [1] * 4)
    assert ds.expansion_counts(d, 2, 1) == {0: 20, 1: 8}
    d5 = ds.Dataset(SMALL, AB, np.zeros((6, 5)), [0] * 5 + [1])
    assert ds.expansion_counts(d5, 1, 2)[0] == 2
    with pytest.raises(ValueError):
        ds.expansion_counts(d, 1, 0)


def test_augment_at_phi_two():
    d = ds.Dataset(SMALL, AB, np.zeros((30, 5)), [1] * 30)
    n = ds.expansion_counts(d, 2, 1)[1]
    synth = ds.Dataset(SMALL, AB, np.ones((n, 5)), [1] * n, ["acgan"] * n)
    assert ds.augment(d, synth).class_counts()[1] == 90


def test_make_fixture():
    schema = ds.FeatureSchema.proportional(10)
    a = ds.make_fixture(ds.separable_spec(10), 200, schema, seed=5)
    b = ds.make_fixture(ds.separable_spec(10), 200, schema, seed=5)
    assert a.equals(b)
    assert a.class_counts().tolist() == [200, 200]
    assert np.all(np.abs(a.features[a.labels == 0].mean(axis=0) + 3) < 0.3)
    assert len(ds.make_fixture(ds.separable_spec(10), 0, schema, 1)) == 0


def test_make_fixture_mixture_and_full_covariance():
    schema = ds.FeatureSchema.proportional(5)
    cov = np.eye(5) + 0.5
    spec = [[ds.GaussianComponent(mean=[4.0], cov=cov)],
            [ds.GaussianComponent(mean=-5, weight=1), ds.GaussianComponent(mean=5, weight=3)]]
    d = ds.make_fixture(spec, [4000, 4000], schema, 0)
    c0 = d.features[d.labels == 0]
    assert abs(c0[:, 0].mean() - 4) < 0.1 and abs(c0[:, 1].mean()) < 0.1
    assert abs(np.cov(c0, rowvar=False)[0, 1] - 0.5) < 0.1
    assert abs((d.features[d.labels == 1][:, 0] > 0).mean() - 0.75) < 0.03


def test_bad_covariance():
    schema = ds.FeatureSchema.proportional(5)
    with pytest.raises(BadCovariance):
        ds.make_fixture([[ds.GaussianComponent(cov=-1.0)], [ds.GaussianComponent()]], 3, schema, 0)
    with pytest.raises(BadCovariance):
        ds.make_fixture([[ds.GaussianComponent()], [ds.GaussianComponent(cov=np.ones((5, 5)) - 2 * np.eye(5))]],
                        3, schema, 0)


def test_factor_spec_is_low_rank():
    spec = ds.factor_spec(20, 3, latent_dim=2, noise=1e-4, seed=0)
    cov = spec[0][0].cov
    vals = np.linalg.eigvalsh(cov)
    assert np.sum(vals > 1e-3) == 2


def test_factor_spec_modes():
    spec = ds.factor_spec(12, 4, latent_dim=3, modes=3, seed=2)
    assert [len(m) for m in spec] == [3, 3, 3, 3]
    assert spec[0][0].cov is spec[3][2].cov
    assert not np.allclose(spec[0][0].mean, spec[0][1].mean)


def test_sparse_spec_zero_inflated():
    schema = ds.FeatureSchema.proportional(20)
    spec = ds.sparse_spec(20, 2, density=0.3, modes=2, seed=1)
    d = ds.make_fixture(spec, 500, schema, 0)
    zero = np.abs(d.features) < 0.01
    # about 70% inactive, and inactive values keep the spike's 1e-3 spread
    assert abs(zero.mean() - 0.7) < 0.1
    assert d.features[zero].std() < 2e-3
