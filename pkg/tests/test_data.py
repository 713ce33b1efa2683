import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folddiff import DataError, Dataset, IngestSchema, StatusReason, load_dataset, validate, write_dataset
from folddiff.data import estimable_mask, expand_categorical

from .conftest import make_dataset


def write(path, text):
    path.write_text(text)
    return path


def test_load_small(tmp_path):
    W = write(tmp_path / "W.csv", "id,c1,c2\ns1,1,0\ns2,3,2.5\ns3,0,4\n")
    M = write(tmp_path / "M.csv", "id,case,age\ns3,0,30\ns1,1,40\ns2,0,50\n")
    d = load_dataset(W, M, IngestSchema("case", ["age"]))
    assert (d.n, d.J, d.p) == (3, 2, 1)
    assert d.sample_ids == ("s1", "s2", "s3")
    np.testing.assert_array_equal(d.A, [1, 0, 0])
    np.testing.assert_array_equal(d.X[:, 0], [40, 50, 30])
    np.testing.assert_array_equal(d.W, [[1, 0], [3, 2.5], [0, 4]])


def test_exposure_not_binary(tmp_path):
    W = write(tmp_path / "W.csv", "id,c1\ns1,1\ns2,3\ns3,2\n")
    M = write(tmp_path / "M.csv", "id,case\ns1,0\ns2,1\ns3,2\n")
    with pytest.raises(DataError, match="exposure not binary"):
        load_dataset(W, M, IngestSchema("case"))


@pytest.mark.parametrize(
    "counts, meta, message",
    [
        ("id,c1\ns1,1\ns1,3\n", "id,case\ns1,0\ns2,1\n", "duplicate"),
        ("id,c1\ns1,1\ns2,3\n", "id,case\ns1,0\ns3,1\n", "not matched"),
        ("id,c1\ns1,1\ns2,abc\n", "id,case\ns1,0\ns2,1\n", "non-numeric"),
        ("id,c1\ns1,1\ns2,\n", "id,case\ns1,0\ns2,1\n", "missing value"),
        ("id,c1\ns1,1\ns2,2\n", "id,case,age\ns1,0,NA\ns2,1,3\n", "missing value"),
        ("id,c1\ns1,-1\ns2,2\n", "id,case\ns1,0\ns2,1\n", "nonnegative"),
    ],
)
def test_ingest_errors(tmp_path, counts, meta, message):
    W = write(tmp_path / "W.csv", counts)
    M = write(tmp_path / "M.csv", meta)
    cov = ["age"] if "age" in meta else []
    with pytest.raises(DataError, match=message):
        load_dataset(W, M, IngestSchema("case", cov))


def test_site_factor_expansion(tmp_path):
    W = write(tmp_path / "W.csv", "id,c1\na,1\nb,2\nc,3\nd,4\n")
    M = write(tmp_path / "M.csv", "id,case,site\na,0,north\nb,1,east\nc,0,west\nd,1,south\n")
    d = load_dataset(W, M, IngestSchema("case", ["site"]))
    # levels sorted: east (baseline), north, south, west
    expected = np.array([[1, 0, 0], [0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=float)
    np.testing.assert_array_equal(d.X, expected)
    assert d.covariate_names == ("site=north", "site=south", "site=west")


def test_numeric_column_forced_categorical(tmp_path):
    W = write(tmp_path / "W.csv", "id,c1\na,1\nb,2\nc,3\n")
    M = write(tmp_path / "M.csv", "id,case,site\na,0,1\nb,1,2\nc,0,3\n")
    d = load_dataset(W, M, IngestSchema("case", ["site"], categorical=["site"]))
    assert d.p == 2


def test_exposure_level(tmp_path):
    W = write(tmp_path / "W.csv", "id,c1\na,1\nb,2\n")
    M = write(tmp_path / "M.csv", "id,group\na,control\nb,case\n")
    d = load_dataset(W, M, IngestSchema("group", exposure_level="case"))
    np.testing.assert_array_equal(d.A, [0, 1])


def test_expand_categorical_single_level():
    cols, names = expand_categorical(["x", "x"], "f")
    assert cols.shape == (2, 0) and names == []


def test_round_trip_bit_exact(tmp_path, rng):
    d = make_dataset(rng, n=25, J=3, p=2)
    write_dataset(d, tmp_path / "W.csv", tmp_path / "M.csv")
    back = load_dataset(tmp_path / "W.csv", tmp_path / "M.csv", IngestSchema("exposure", list(d.covariate_names)))
    assert np.array_equal(back.W, d.W) and np.array_equal(back.A, d.A) and np.array_equal(back.X, d.X)
    assert back.category_names == d.category_names


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(np.ones((3, 2)), [1, 1, 1], None)
    with pytest.raises(DataError):
        Dataset(-np.ones((3, 2)), [1, 0, 1], None)
    with pytest.raises(DataError):
        Dataset(np.ones((3, 2)), [1, 0, 2], None)
    with pytest.raises(DataError):
        Dataset(np.ones((1, 2)), [1], None)
    d = Dataset(np.ones((3, 2)), [1, 0, 1], None)
    assert d.p == 0
    with pytest.raises(ValueError):
        d.W[0, 0] = 5.0


def test_validate_reasons():
    A = np.array([0, 0, 1, 1])
    W = np.array([[1, 1, 0, 0], [2, 0, 0, 0], [3, 0, 1, 0], [4, 0, 0, 0]], dtype=float)
    status = validate(Dataset(W, A, None))
    assert [s.reason for s in status] == [
        StatusReason.OK, StatusReason.ALL_ZERO_IN_ARM1, StatusReason.ALL_ZERO_IN_ARM0, StatusReason.ALL_ZERO,
    ]
    assert [s.estimable for s in status] == [True, False, False, False]
    np.testing.assert_array_equal(estimable_mask(status), [True, False, False, False])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_validate_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    n, J = 12, 5
    A = np.r_[np.zeros(6), np.ones(6)]
    W = rng.poisson(0.4, size=(n, J)).astype(float)
    perm = rng.permutation(n)
    a = validate(Dataset(W, A, None))
    b = validate(Dataset(W[perm], A[perm], None))
    assert [s.reason for s in a] == [s.reason for s in b]
