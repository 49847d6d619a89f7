"""Loader, splitting, negative sampling, and privacy assignment tests."""

import numpy as np
import pytest

from fedgraphrec.data import (
    DataFormatError,
    FileFormat,
    InteractionDataset,
    Tier,
    assign_privacy,
    leave_one_out_split,
    load_interactions,
    sample_eval_negatives,
    sample_train_negatives,
)
from fedgraphrec.seeding import derive_rng


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# --- load_interactions -------------------------------------------------------


def test_load_tsv_basic(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\t100\nu2\ti1\t3\t200\nu1\ti2\t4\t150\n")
    records = load_interactions(path, FileFormat.TAB)
    assert [(r.user, r.item, r.rating, r.timestamp) for r in records] == [
        ("u1", "i1", 5.0, 100),
        ("u2", "i1", 3.0, 200),
        ("u1", "i2", 4.0, 150),
    ]


def test_load_double_colon(tmp_path):
    path = write(tmp_path, "a.dat", "1::10::5::978300760\n2::10::3::978302109\n")
    records = load_interactions(path, FileFormat.DOUBLE_COLON)
    assert records[0].user == "1" and records[0].item == "10"
    assert records[1].timestamp == 978302109


def test_load_csv_skips_header_and_handles_quotes(tmp_path):
    path = write(
        tmp_path,
        "a.csv",
        'user,item,rating,timestamp\nu1,"i,1",5,7\nu2,i2,3,9\n',
    )
    records = load_interactions(path, FileFormat.CSV)
    assert [r.item for r in records] == ["i,1", "i2"]


def test_load_without_timestamps(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\nu1\ti2\t4\n")
    records = load_interactions(path, FileFormat.TAB)
    assert all(r.timestamp is None for r in records)


def test_load_rejects_wrong_field_count(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\nu2\ti2\n")
    with pytest.raises(DataFormatError, match=":2"):
        load_interactions(path, FileFormat.TAB)


def test_load_rejects_bad_rating(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\tfive\t3\n")
    with pytest.raises(DataFormatError, match=":1"):
        load_interactions(path, FileFormat.TAB)


def test_load_rejects_bad_timestamp(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\tnoon\n")
    with pytest.raises(DataFormatError, match="timestamp"):
        load_interactions(path, FileFormat.TAB)


def test_load_rejects_empty_token(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\t\t5\t3\n")
    with pytest.raises(DataFormatError, match="empty user or item"):
        load_interactions(path, FileFormat.TAB)


def test_load_rejects_empty_file(tmp_path):
    path = write(tmp_path, "a.tsv", "")
    with pytest.raises(DataFormatError, match="no interaction records"):
        load_interactions(path, FileFormat.TAB)


def test_duplicate_keeps_larger_timestamp(tmp_path):
    # the later-timestamp record wins even when it appears first in the file
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\t900\nu2\ti9\t1\t5\nu1\ti1\t2\t100\n")
    records = load_interactions(path, FileFormat.TAB)
    assert len(records) == 2
    dup = [r for r in records if r.user == "u1"][0]
    assert dup.rating == 5.0 and dup.timestamp == 900
    # surviving records keep file order: u1 line came before u2 line
    assert [r.user for r in records] == ["u1", "u2"]


def test_duplicate_timestamp_tie_keeps_later_line(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\t100\nu1\ti1\t2\t100\n")
    records = load_interactions(path, FileFormat.TAB)
    assert len(records) == 1
    assert records[0].rating == 2.0


def test_duplicate_without_timestamps_keeps_later_line(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\nu1\ti1\t1\n")
    records = load_interactions(path, FileFormat.TAB)
    assert len(records) == 1 and records[0].rating == 1.0


def test_blank_lines_are_skipped(tmp_path):
    path = write(tmp_path, "a.tsv", "u1\ti1\t5\t1\n\nu2\ti2\t3\t2\n")
    assert len(load_interactions(path, FileFormat.TAB)) == 2


def test_format_from_string():
    assert FileFormat.from_string("tsv") is FileFormat.TAB
    assert FileFormat.from_string("double-colon") is FileFormat.DOUBLE_COLON
    assert FileFormat.from_string("csv") is FileFormat.CSV
    with pytest.raises(ValueError, match="unknown file format"):
        FileFormat.from_string("parquet")


# --- leave_one_out_split ------------------------------------------------------


def lines(*triples):
    """Build a TSV text from (user, item, rating, ts) tuples."""
    return "".join("\t".join(str(x) for x in t) + "\n" for t in triples)


def test_split_most_recent_is_test_second_is_validation(tmp_path):
    path = write(
        tmp_path,
        "a.tsv",
        lines(("u", "a", 1, 10), ("u", "b", 1, 5), ("u", "c", 1, 20)),
    )
    ds = leave_one_out_split(load_interactions(path))
    assert ds.item_tokens[ds.test[0]] == "c"
    assert ds.item_tokens[ds.validation[0]] == "a"
    assert [ds.item_tokens[i] for i in ds.train[0]] == ["b"]


def test_split_timestamp_tie_later_line_is_more_recent(tmp_path):
    path = write(
        tmp_path,
        "a.tsv",
        lines(("u", "a", 1, 7), ("u", "b", 1, 7), ("u", "c", 1, 7)),
    )
    ds = leave_one_out_split(load_interactions(path))
    assert ds.item_tokens[ds.test[0]] == "c"
    assert ds.item_tokens[ds.validation[0]] == "b"


def test_split_without_timestamps_uses_file_order(tmp_path):
    path = write(tmp_path, "a.tsv", lines(("u", "a", 1), ("u", "b", 1), ("u", "c", 1)))
    ds = leave_one_out_split(load_interactions(path))
    assert ds.item_tokens[ds.test[0]] == "c"


def test_split_train_is_oldest_first(tmp_path):
    path = write(
        tmp_path,
        "a.tsv",
        lines(("u", "a", 1, 30), ("u", "b", 1, 10), ("u", "c", 1, 20),
              ("u", "d", 1, 40), ("u", "e", 1, 50)),
    )
    ds = leave_one_out_split(load_interactions(path))
    assert [ds.item_tokens[i] for i in ds.train[0]] == ["b", "c", "a"]


def test_split_drops_short_users_and_counts(tmp_path, caplog):
    path = write(
        tmp_path,
        "a.tsv",
        lines(("u1", "a", 1, 1), ("u1", "b", 1, 2), ("u1", "c", 1, 3),
              ("u2", "a", 1, 1), ("u2", "b", 1, 2)),
    )
    with caplog.at_level("WARNING"):
        ds = leave_one_out_split(load_interactions(path))
    assert ds.num_users == 1
    assert ds.dropped_users == 1
    assert ds.dropped_interactions == 2
    assert "dropped 1 users" in caplog.text


def test_split_without_validation_needs_two(tmp_path):
    path = write(tmp_path, "a.tsv", lines(("u", "a", 1, 1), ("u", "b", 1, 2)))
    ds = leave_one_out_split(load_interactions(path), hold_validation=False)
    assert ds.validation[0] is None
    assert ds.item_tokens[ds.test[0]] == "b"
    assert [ds.item_tokens[i] for i in ds.train[0]] == ["a"]


def test_split_errors_when_no_user_survives(tmp_path):
    path = write(tmp_path, "a.tsv", lines(("u", "a", 1, 1)))
    with pytest.raises(ValueError, match="no users with at least"):
        leave_one_out_split(load_interactions(path))


def test_split_indices_first_appearance_order(tmp_path):
    path = write(
        tmp_path,
        "a.tsv",
        lines(("u2", "x", 1, 1), ("u2", "y", 1, 2), ("u2", "z", 1, 3),
              ("u1", "y", 1, 1), ("u1", "w", 1, 2), ("u1", "x", 1, 3)),
    )
    ds = leave_one_out_split(load_interactions(path))
    assert ds.user_tokens == ["u2", "u1"]
    assert ds.item_tokens == ["x", "y", "z", "w"]
    assert ds.user_index == {"u2": 0, "u1": 1}
    assert ds.item_index["w"] == 3


def test_counting_invariant(tmp_path):
    # per-user split sizes plus dropped interactions equal the deduplicated total
    rng = np.random.default_rng(5)
    rows = []
    for u in range(12):
        for i in rng.choice(30, size=rng.integers(1, 9), replace=False):
            rows.append((f"u{u}", f"i{i}", 1, int(rng.integers(0, 1000))))
    path = write(tmp_path, "a.tsv", lines(*rows))
    records = load_interactions(path)
    ds = leave_one_out_split(records)
    assert ds.total_interactions + ds.dropped_interactions == len(records)


def test_split_disjoint_per_user(tmp_path):
    path = write(
        tmp_path,
        "a.tsv",
        lines(*[("u", f"i{k}", 1, k) for k in range(6)]),
    )
    ds = leave_one_out_split(load_interactions(path))
    held = {ds.validation[0], ds.test[0]}
    assert held.isdisjoint(set(ds.train[0].tolist()))


# --- negative sampling --------------------------------------------------------


def small_dataset():
    """4 users, 10 items, hand-set splits."""
    train = [
        np.array([0, 1, 2], dtype=np.int64),
        np.array([3, 4], dtype=np.int64),
        np.array([5], dtype=np.int64),
        np.array([0, 5], dtype=np.int64),
    ]
    return InteractionDataset(
        num_users=4,
        num_items=10,
        train=train,
        validation=[3, 5, 6, 1],
        test=[4, 6, 7, 2],
        user_tokens=[f"u{i}" for i in range(4)],
        item_tokens=[f"i{i}" for i in range(10)],
        user_index={f"u{i}": i for i in range(4)},
        item_index={f"i{i}": i for i in range(10)},
    )


def test_negative_pool_excludes_all_splits():
    ds = small_dataset()
    pool = ds.negative_pool(0)
    assert set(pool.tolist()) == {5, 6, 7, 8, 9}


def test_train_negatives_count_and_membership():
    ds = small_dataset()
    negs = sample_train_negatives(ds, 0, ratio=4, rng=derive_rng(1))
    assert negs.size == 4 * 3
    assert set(negs.tolist()) <= set(ds.negative_pool(0).tolist())


def test_train_negatives_sample_with_replacement():
    ds = small_dataset()
    # pool for user 0 has 5 items; 12 draws must repeat
    negs = sample_train_negatives(ds, 0, ratio=4, rng=derive_rng(2))
    assert len(set(negs.tolist())) < negs.size


def test_train_negatives_ratio_below_one_rejected():
    with pytest.raises(ValueError, match="ratio"):
        sample_train_negatives(small_dataset(), 0, ratio=0, rng=derive_rng(0))


def test_train_negatives_empty_pool_is_error():
    ds = small_dataset()
    ds.train[1] = np.arange(8, dtype=np.int64)  # items 0..7, val 5... make pool empty
    ds.validation[1] = 8
    ds.test[1] = 9
    with pytest.raises(ValueError, match="user 1"):
        sample_train_negatives(ds, 1, ratio=1, rng=derive_rng(0))


def test_eval_negatives_distinct_count_and_exclusion():
    ds = small_dataset()
    negs = sample_eval_negatives(ds, 0, count=5, rng=derive_rng(3))
    assert negs.size == 5
    assert len(set(negs.tolist())) == 5
    assert set(negs.tolist()) == {5, 6, 7, 8, 9}


def test_eval_negatives_deterministic():
    ds = small_dataset()
    a = sample_eval_negatives(ds, 3, count=4, rng=derive_rng(9, 3))
    b = sample_eval_negatives(ds, 3, count=4, rng=derive_rng(9, 3))
    np.testing.assert_array_equal(a, b)


def test_eval_negatives_pool_too_small_names_user():
    ds = small_dataset()
    with pytest.raises(ValueError, match="user 2"):
        sample_eval_negatives(ds, 2, count=99, rng=derive_rng(0))


# --- assign_privacy -----------------------------------------------------------


def test_privacy_count_rounds_half_up():
    # 0.25 * 10 = 2.5 rounds to 3, not banker's 2
    tiers = assign_privacy(10, 0.25, seed=0)
    assert tiers.num_public == 3
    assert tiers.num_private == 7


def test_privacy_extremes():
    assert assign_privacy(7, 0.0, seed=1).num_public == 0
    assert assign_privacy(7, 1.0, seed=1).num_public == 7


def test_privacy_deterministic_and_seed_sensitive():
    a = assign_privacy(100, 0.5, seed=4)
    b = assign_privacy(100, 0.5, seed=4)
    c = assign_privacy(100, 0.5, seed=5)
    np.testing.assert_array_equal(a.is_public, b.is_public)
    assert (a.is_public != c.is_public).any()


def test_privacy_tier_accessors():
    tiers = assign_privacy(10, 0.3, seed=2)
    assert tiers.tier(int(tiers.public_users()[0])) is Tier.PUBLIC
    assert tiers.tier(int(tiers.private_users()[0])) is Tier.PRIVATE
    merged = np.sort(np.concatenate([tiers.public_users(), tiers.private_users()]))
    np.testing.assert_array_equal(merged, np.arange(10))


def test_privacy_validates_inputs():
    with pytest.raises(ValueError):
        assign_privacy(0, 0.5, seed=0)
    with pytest.raises(ValueError):
        assign_privacy(5, 1.5, seed=0)
