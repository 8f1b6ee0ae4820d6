import numpy as np
import pytest

from shillkit.attacks import ShillingProfile
from shillkit.errors import DatasetParseError, UnknownIdError, ValidationError
from shillkit.ratings import (RatingMatrix, co_rated_items, compute_stats, inject_profiles,
                              load_movielens, read_labels, remove_users, write_ratings)


def write(tmp_path, text, name="u.data"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_line_file(tmp_path):
    m = load_movielens(write(tmp_path, "1\t1\t5\t10\n1\t2\t3\t11\n2\t1\t1\t12\n"))
    stats = compute_stats(m)
    assert (m.n_users, m.n_items, m.n_ratings) == (2, 2, 3)
    assert stats.global_mean == 3.0
    assert stats.per_user_mean == {1: 4.0, 2: 1.0}
    assert m.authentic.all()
    assert not m.labels_known


def test_item_stats():
    m = RatingMatrix.from_triples([(1, 1, 5), (2, 1, 1)])
    stats = compute_stats(m)
    assert stats.per_item_mean[1] == 3.0
    assert stats.per_item_count[1] == 2


def test_empty_file(tmp_path):
    m = load_movielens(write(tmp_path, ""))
    stats = compute_stats(m)
    assert (m.n_users, m.n_items, m.n_ratings) == (0, 0, 0)
    assert stats.global_mean is None
    assert stats.per_user_mean == {}


@pytest.mark.parametrize("line, fragment", [
    ("1\t2\t3\n", "4 tab-separated"),
    ("1\tx\t3\t0\n", "non-numeric item"),
    ("1\t2\t6\t0\n", "outside"),
    ("1\t2\t0\t0\n", "outside"),
    ("1\t2\t3.5\t0\n", "non-numeric rating"),
])
def test_malformed_lines_name_the_line(tmp_path, line, fragment):
    p = write(tmp_path, "1\t1\t4\t0\n" + line)
    with pytest.raises(DatasetParseError) as err:
        load_movielens(p)
    assert err.value.line_no == 2
    assert fragment in str(err.value)
    assert ":2:" in str(err.value)


def test_duplicate_pair_rejected(tmp_path):
    p = write(tmp_path, "1\t1\t4\t0\n2\t1\t3\t0\n1\t1\t5\t0\n")
    with pytest.raises(DatasetParseError, match="first on line 1"):
        load_movielens(p)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_movielens(tmp_path / "nope.data")


def test_genres_loaded(toy_genres):
    assert toy_genres.item_genres[1] == {"Horror"}
    assert toy_genres.item_genres[13] == {"Horror", "Comedy"}
    assert toy_genres.items_with_genre("Comedy") == [7, 8, 9, 10, 11, 12, 13]


def test_labels_mark_injected(toy_attack):
    assert toy_attack.labels_known
    assert toy_attack.n_authentic == 3
    assert toy_attack.injected_ids == list(range(4, 16))


def test_co_rated_items():
    m = RatingMatrix.from_triples([(1, 1, 3), (1, 2, 3), (1, 3, 3),
                                   (2, 2, 4), (2, 3, 4), (2, 4, 4), (3, 9, 1)])
    assert co_rated_items(m, 1, 2) == [2, 3]
    assert co_rated_items(m, 2, 1) == [2, 3]
    assert co_rated_items(m, 1, 3) == []
    assert co_rated_items(m, 1, 1) == [1, 2, 3]
    with pytest.raises(UnknownIdError):
        co_rated_items(m, 1, 99)


def test_round_trip(tmp_path, toy_attack):
    out = tmp_path / "r.tsv"
    labels = tmp_path / "labels.txt"
    write_ratings(toy_attack, out, labels)
    again = load_movielens(out, labels_path=labels)
    assert again == toy_attack
    assert read_labels(labels) == set(range(4, 16))


def test_inject_zero_profiles_is_identity(toy45):
    assert inject_profiles(toy45, []) == toy45


def test_inject_one_profile():
    m = RatingMatrix.from_triples([(1, 1, 5), (1, 2, 3), (2, 1, 1)])
    post = inject_profiles(m, [ShillingProfile(user=3, filler={1: 4}, target={2: 5}),
                               ShillingProfile(user=4, target={1: 1})])
    assert post.n_ratings == 6
    assert post.n_users == 4
    assert post.n_authentic == 2
    assert post.injected_ids == [3, 4]
    assert post.labels_known
    # original untouched
    assert m.n_ratings == 3 and m.n_users == 2


def test_profile_all_ratings_merges_sections():
    p = ShillingProfile(user=3, selected={1: 5}, filler={2: 4}, target={7: 1})
    assert p.all_ratings() == {1: 5, 2: 4, 7: 1}


def test_inject_rejects_unknown_item_and_stale_id(toy45):
    with pytest.raises(ValidationError, match="unknown item"):
        inject_profiles(toy45, [ShillingProfile(user=10, target={99: 5})])
    with pytest.raises(ValidationError, match="not fresh"):
        inject_profiles(toy45, [ShillingProfile(user=1, target={1: 5})])


def test_authentic_stats_unchanged_by_injection(toy45):
    post = inject_profiles(toy45, [ShillingProfile(user=5, filler={1: 3, 2: 3}, target={5: 5})])
    before = compute_stats(toy45)
    authentic = remove_users(post, post.injected_ids)
    after = compute_stats(authentic)
    assert before == after


def test_matrix_is_read_only(toy45):
    with pytest.raises(ValueError):
        toy45.dense[0, 0] = 1
    with pytest.raises(ValueError):
        toy45.values[0] = 1


def test_lookups(toy45):
    assert toy45.rating(1, 1) == 5
    assert toy45.rating(1, 5) is None
    assert toy45.user_ratings(3) == {1: 1, 2: 5, 3: 2, 5: 4}
    assert toy45.item_ratings(4) == {1: 1, 2: 2, 4: 5}
    np.testing.assert_array_equal(toy45.mask.sum(axis=1), [4, 5, 4, 4])


@pytest.mark.movielens
def test_movielens_counts(ml100k):
    assert (ml100k.n_users, ml100k.n_items, ml100k.n_ratings) == (943, 1682, 100000)
    assert ml100k.item_genres is not None and len(ml100k.item_genres) == 1682


@pytest.mark.movielens
def test_movielens_global_mean_matches_streaming_oracle(ml100k):
    # single pass over the raw file: sum 352986 over 100000 lines
    assert abs(compute_stats(ml100k).global_mean - 3.52986) <= 1e-9


@pytest.mark.movielens
def test_inject_47_profiles(ml100k):
    profiles = [ShillingProfile(user=943 + k, target={1: 5}) for k in range(1, 48)]
    post = inject_profiles(ml100k, profiles)
    assert post.n_users == 990
    assert post.n_authentic == 943
