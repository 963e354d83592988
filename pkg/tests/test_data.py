import numpy as np
import pytest

from hypkg.data import (
    INVERSE_MARKER,
    Dataset,
    augment_with_inverses,
    build_filter_index,
    load_dataset,
    read_triples,
)
from hypkg.errors import DomainError, ParseError


def write_split(directory, name, lines, ext=".tsv"):
    (directory / f"{name}{ext}").write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


@pytest.fixture
def tiny_dir(tmp_path):
    write_split(tmp_path, "train", ["a\tr\tb", "b\tr\tc"])
    write_split(tmp_path, "valid", ["a\ts\tc"])
    write_split(tmp_path, "test", ["c\tr\td"])
    return tmp_path


def test_load_counts(tiny_dir):
    ds = load_dataset(tiny_dir)
    assert ds.entities == ["a", "b", "c", "d"]
    assert ds.base_relations == ["r", "s"]
    assert ds.relations == ["r", "s", "r" + INVERSE_MARKER, "s" + INVERSE_MARKER]
    assert len(ds.train) == 4 and len(ds.train_raw) == 2


def test_two_line_train_only(tmp_path):
    write_split(tmp_path, "train", ["a\tr\tb", "b\tr\tc"])
    write_split(tmp_path, "valid", [])
    write_split(tmp_path, "test", [])
    ds = load_dataset(tmp_path)
    assert (ds.n_entities, ds.n_base_relations, len(ds.train)) == (3, 1, 4)


def test_inverse_rows(tiny_dir):
    ds = load_dataset(tiny_dir)
    np.testing.assert_array_equal(ds.train, [[0, 0, 1], [1, 0, 2], [1, 2, 0], [2, 2, 1]])
    assert ds.inverse(0) == 2 and ds.inverse(3) == 1


def test_deterministic(tiny_dir):
    a, b = load_dataset(tiny_dir), load_dataset(tiny_dir)
    assert a.entities == b.entities and np.array_equal(a.train, b.train)


def test_decode_round_trip(tiny_dir):
    ds = load_dataset(tiny_dir)
    assert ds.decode(ds.train_raw) == read_triples(tiny_dir / "train.tsv")
    assert ds.decode(ds.test) == [("c", "r", "d")]


def test_txt_fallback(tmp_path):
    for name in ("train", "valid", "test"):
        write_split(tmp_path, name, ["x\tr\ty"], ext=".txt")
    assert load_dataset(tmp_path).n_entities == 2


def test_missing_split(tmp_path):
    write_split(tmp_path, "train", ["x\tr\ty"])
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)


def test_parse_error_has_line_number(tmp_path):
    write_split(tmp_path, "train", ["a\tr\tb", "oops only two\tfields"])
    with pytest.raises(ParseError, match=":2:"):
        read_triples(tmp_path / "train.tsv")


def test_reserved_marker_rejected(tmp_path):
    write_split(tmp_path, "train", [f"a\tr{INVERSE_MARKER}\tb"])
    with pytest.raises(ParseError):
        read_triples(tmp_path / "train.tsv")
    with pytest.raises(DomainError):
        Dataset.from_triples([("a", "r" + INVERSE_MARKER, "b")])


def test_duplicates_preserved():
    ds = Dataset.from_triples([("a", "r", "b"), ("a", "r", "b")])
    assert len(ds.train_raw) == 2


def test_double_augmentation_rejected():
    once = augment_with_inverses([(0, 0, 1)], 1)
    with pytest.raises(DomainError):
        augment_with_inverses(once, 1)


def test_filter_single_triple():
    ds = Dataset.from_triples([("x", "r", "y")])
    idx = build_filter_index(ds)
    assert {k: list(v) for k, v in idx.items()} == {(0, 0): [1], (1, 1): [0]}
    assert len(ds.tails(1, 0)) == 0


def test_filter_brute_force():
    train = [("a", "r", "b"), ("a", "r", "c"), ("b", "s", "a")]
    valid = [("c", "r", "a")]
    test = [("a", "s", "c")]
    ds = Dataset.from_triples(train, valid, test)
    nb = ds.n_base_relations
    want = {}
    for h, r, t in np.concatenate([ds.train_raw, ds.valid, ds.test]).tolist():
        want.setdefault((h, r), set()).add(t)
        want.setdefault((t, r + nb), set()).add(h)
    assert {k: set(v.tolist()) for k, v in ds.filter_index.items()} == want
    for arr in ds.filter_index.values():
        assert np.all(np.diff(arr) > 0)


def test_gold_tails_are_in_their_filter(tiny_dir):
    ds = load_dataset(tiny_dir)
    for h, r, t in np.concatenate([ds.valid, ds.test]).tolist():
        assert t in ds.tails(h, r)
        assert h in ds.tails(t, r + ds.n_base_relations)


def test_dictionary_dump(tiny_dir, tmp_path):
    ds = load_dataset(tiny_dir)
    ds.dump_dictionaries(tmp_path / "dicts")
    lines = (tmp_path / "dicts" / "entities.tsv").read_text(encoding="utf-8").splitlines()
    assert lines == ["a\t0", "b\t1", "c\t2", "d\t3"]
