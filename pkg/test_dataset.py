"""
Tests for dataset loading, synthesis, standardization and splits
"""

import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from dataset import (EvalDataset, PUDataset, SplitSpec, SynthSpec, Standardizer, derive_seed, fit_standardizer,
                     load_eval_csv, load_features_csv, load_gram_csv, load_pu_csv, realized_label_frequency,
                     round_half_up, box_muller, make_rng, split, split_case_control, split_single_training_set,
                     synth_generate, write_eval_csv, write_pu_csv)
from errors import (DimensionMismatch, EmptyDataset, InvalidEncoding, InvalidHyperparameter, InvalidLabel,
                    NoLabeledPositives, NonNumericFeature, NoUnlabeled, RaggedRow)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


# CSV ingest

def test_minimal_pu_file(tmp_path):
    data = load_pu_csv(write(tmp_path, "pu.csv", "f1,f2,label\n0.0,0.0,p\n1.0,1.0,u\n"))
    assert (data.n_p, data.n_u, data.m) == (1, 1, 2)
    assert data.feature_names == ("f1", "f2")
    assert_allclose(data.features_u, [[1.0, 1.0]])


def test_bad_label_token(tmp_path):
    with pytest.raises(InvalidLabel):
        load_pu_csv(write(tmp_path, "pu.csv", "f1,label\n0.5,x\n"))


def test_header_only_file(tmp_path):
    with pytest.raises(EmptyDataset):
        load_pu_csv(write(tmp_path, "pu.csv", "f1,f2,label\n"))


def test_empty_file(tmp_path):
    with pytest.raises(EmptyDataset):
        load_pu_csv(write(tmp_path, "pu.csv", ""))


def test_non_numeric_feature(tmp_path):
    with pytest.raises(NonNumericFeature):
        load_pu_csv(write(tmp_path, "pu.csv", "f1,label\n0.5,p\nabc,u\n"))


def test_row_with_extra_field(tmp_path):
    with pytest.raises(RaggedRow):
        load_pu_csv(write(tmp_path, "pu.csv", "f1,label\n0.5,p\n1.0,2.0,u\n"))


def test_file_that_is_not_utf8(tmp_path):
    path = tmp_path / "pu.csv"
    path.write_bytes(b"f1,label\n0.5,p\n\xff\xfe1.0,u\n")
    with pytest.raises(InvalidEncoding):
        load_pu_csv(path)


def test_missing_label_column(tmp_path):
    with pytest.raises(InvalidLabel):
        load_pu_csv(write(tmp_path, "pu.csv", "f1,f2\n0.5,1\n"))


def test_pu_file_round_trip(tmp_path):
    rng = make_rng(3)
    data = PUDataset(rng.normal(size=(4, 3)), rng.normal(size=(6, 3)), ("a", "b", "c"))
    path = tmp_path / "pu.csv"
    write_pu_csv(data, path)
    loaded = load_pu_csv(path)
    assert loaded.feature_names == ("a", "b", "c")
    np.testing.assert_array_equal(loaded.features_p, data.features_p)
    np.testing.assert_array_equal(loaded.features_u, data.features_u)


def test_interleaved_pu_file_round_trips_byte_for_byte(tmp_path):
    text = "f1,label\n1,u\n2,p\n3,u\n"
    source = write(tmp_path, "pu.csv", text)
    data = load_pu_csv(source)
    assert_allclose(data.features_p, [[2.0]])
    assert_allclose(data.features_u, [[1.0], [3.0]])

    copy = tmp_path / "copy.csv"
    write_pu_csv(data, copy)
    assert copy.read_text() == text


def test_standardized_copy_keeps_the_row_order(tmp_path):
    data = load_pu_csv(write(tmp_path, "pu.csv", "f1,label\n4,u\n0,p\n2,u\n6,p\n"))
    scaled = data.with_features(fit_standardizer(data).transform(data.features_pu))
    rows, is_positive = scaled.in_file_order()
    assert is_positive.tolist() == [False, True, False, True]
    assert np.argsort(rows[:, 0]).tolist() == [1, 2, 0, 3]


def test_eval_file_and_feature_loader(tmp_path):
    path = write(tmp_path, "truth.csv", "x1,x2,label\n1,2,1\n3,4,-1\n")
    truth = load_eval_csv(path)
    assert truth.labels.tolist() == [1, -1]
    features, names = load_features_csv(path)
    assert names == ("x1", "x2")
    assert_allclose(features, [[1, 2], [3, 4]])

    unlabeled, names = load_features_csv(write(tmp_path, "x.csv", "x1,x2\n5,6\n"))
    assert names == ("x1", "x2")
    assert_allclose(unlabeled, [[5, 6]])


def test_eval_file_rejects_pu_labels(tmp_path):
    with pytest.raises(InvalidLabel):
        load_eval_csv(write(tmp_path, "truth.csv", "x1,label\n1,p\n"))


def test_gram_file(tmp_path):
    gram = load_gram_csv(write(tmp_path, "gram.csv", "1,0.5\n0.5,1\n"))
    assert_allclose(gram, [[1, 0.5], [0.5, 1]])
    with pytest.raises(DimensionMismatch):
        load_gram_csv(write(tmp_path, "bad.csv", "1,0.5\n"))


def test_dataset_blocks_must_be_nonempty():
    with pytest.raises(NoLabeledPositives):
        PUDataset(np.empty((0, 2)), np.ones((3, 2)))
    with pytest.raises(NoUnlabeled):
        PUDataset(np.ones((3, 2)), np.empty((0, 2)))
    with pytest.raises(DimensionMismatch):
        PUDataset(np.ones((3, 2)), np.ones((3, 1)))


# Synthetic data

def test_synth_counts_and_labels():
    data = synth_generate(SynthSpec(50, seed=7))
    assert data.features.shape == (800, 2)
    assert int((data.labels == 1).sum()) == 400
    assert int((data.labels == -1).sum()) == 400


def test_synth_is_deterministic(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    write_eval_csv(synth_generate(SynthSpec(50, seed=7)), first)
    write_eval_csv(synth_generate(SynthSpec(50, seed=7)), second)
    assert first.read_bytes() == second.read_bytes()
    assert not np.array_equal(synth_generate(SynthSpec(50, seed=8)).features,
                              synth_generate(SynthSpec(50, seed=7)).features)


def test_synth_cluster_means_over_many_seeds():
    tolerance = 3 * np.sqrt(50 / 200)
    blocks = ((slice(0, 200), 15.0), (slice(200, 400), 200.0), (slice(400, 800), 0.0))
    misses = 0
    for seed in range(100):
        features = synth_generate(SynthSpec(200, seed=seed)).features
        for rows, centre in blocks:
            misses += int((np.abs(features[rows].mean(axis=0) - centre) > tolerance).sum())
    # 100 seeds x 3 clusters x 2 coordinates
    assert misses <= 6


def test_synth_cluster_centres():
    data = synth_generate(SynthSpec(200, seed=1))
    assert_allclose(data.features[:200].mean(axis=0), [15, 15], atol=2.0)
    assert_allclose(data.features[200:400].mean(axis=0), [200, 200], atol=2.0)
    assert_allclose(data.features[400:].mean(axis=0), [0, 0], atol=2.0)


def test_synth_degenerate_centre():
    data = synth_generate(SynthSpec(0, seed=1))
    assert data.n == 800


def test_box_muller_moments():
    draws = box_muller(make_rng(11), 100001)
    assert draws.shape == (100001,)
    assert abs(draws.mean()) < 0.02
    assert abs(draws.std() - 1.0) < 0.02


def test_derive_seed():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 2, 4)


# Standardizer

def test_standardizer_hand_columns():
    data = PUDataset([[1.0, 5.0]], [[3.0, 5.0]])
    standardizer = fit_standardizer(data)
    assert_allclose(standardizer.transform(data.features_pu), [[-1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DimensionMismatch):
        standardizer.transform(np.ones((2, 3)))


def test_identity_standardizer():
    features = np.array([[1.5, -2.0]])
    np.testing.assert_array_equal(Standardizer.identity(2).transform(features), features)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n_p=st.integers(1, 10), n_u=st.integers(1, 10))
def test_standardized_columns_have_zero_mean_unit_variance(seed, n_p, n_u):
    rng = make_rng(seed)
    data = PUDataset(rng.normal(3, 2, size=(n_p, 3)), rng.normal(-1, 5, size=(n_u, 3)))
    scaled = fit_standardizer(data).transform(data.features_pu)
    assert_allclose(scaled.mean(axis=0), 0, atol=1e-9)
    assert_allclose(scaled.std(axis=0), 1, atol=1e-9)


def test_standardizer_dict_round_trip():
    standardizer = fit_standardizer(PUDataset([[1.0, 2.0]], [[4.0, 2.0]]))
    restored = Standardizer.from_dict(standardizer.to_dict())
    np.testing.assert_array_equal(restored.means, standardizer.means)
    np.testing.assert_array_equal(restored.constant, standardizer.constant)


# Splits

def test_round_half_up():
    assert round_half_up(Fraction(1, 2)) == 1
    assert round_half_up(Fraction(5, 2)) == 3
    assert round_half_up(Fraction(7, 10) * 635) == 445


def test_single_training_set_counts():
    data = synth_generate(SynthSpec(50, seed=7))
    train, test = split_single_training_set(data, SplitSpec.single_training_set(seed=3))
    assert train.n == 560
    assert test.n == 240
    assert 0 < train.n_p < 560


def test_single_training_set_labels_a_quarter_of_training_positives():
    # 280 positives in the 7 training rows of every 10
    features = np.arange(400, dtype=float).reshape(-1, 1)
    labels = np.where(np.arange(400) < 200, 1, -1)
    data = EvalDataset(features, labels)
    spec = SplitSpec.single_training_set(seed=5)
    train, _ = split_single_training_set(data, spec)
    positives_in_train = train.n_p / realized_label_frequency(data, spec)
    assert train.n_p == round_half_up(Fraction(1, 4) * round(positives_in_train))


def test_single_training_set_too_small_fraction():
    data = EvalDataset([[0.0], [1.0], [2.0], [3.0]], [1, -1, -1, -1])
    with pytest.raises(NoLabeledPositives):
        split_single_training_set(data, SplitSpec.single_training_set(labeled_fraction=Fraction(1, 10)))


def test_case_control_counts():
    data = synth_generate(SynthSpec(50, seed=7))
    train, test = split_case_control(data, SplitSpec.case_control(Fraction(7, 17), seed=2))
    assert train.n_p == 165
    assert train.n_u == 445
    assert test.n == 190


def test_case_control_empty_pool():
    data = EvalDataset([[0.0], [1.0]], [1, 1])
    with pytest.raises(NoUnlabeled):
        split_case_control(data, SplitSpec.case_control(1))


def test_expected_label_frequency():
    assert SplitSpec.case_control(Fraction(7, 17)).expected_label_frequency == Fraction(1, 2)
    assert SplitSpec.case_control(Fraction(7, 37)).expected_label_frequency == Fraction(1, 4)


@pytest.mark.parametrize("gamma_prime, expected", [(Fraction(7, 17), 0.5), (Fraction(7, 37), 0.25)])
def test_case_control_realized_label_frequency(gamma_prime, expected):
    data = synth_generate(SynthSpec(50, seed=7))
    frequencies = [realized_label_frequency(data, SplitSpec.case_control(gamma_prime, seed=seed))
                   for seed in range(200)]
    assert abs(np.mean(frequencies) - expected) < 0.02


def sorted_rows(*blocks):
    return sorted(map(tuple, np.vstack(blocks).tolist()))


@pytest.mark.parametrize("spec", [SplitSpec.single_training_set(seed=3),
                                  SplitSpec.case_control(Fraction(7, 17), seed=3),
                                  SplitSpec.case_control(Fraction(7, 37), seed=8)])
def test_split_partitions_the_rows(spec):
    data = synth_generate(SynthSpec(100, seed=5))
    train, test = split(data, spec)
    assert train.n + test.n == data.n
    assert sorted_rows(train.features_p, train.features_u, test.features) == sorted_rows(data.features)


def test_split_is_deterministic():
    data = synth_generate(SynthSpec(100, seed=4))
    spec = SplitSpec.case_control(Fraction(7, 17), seed=9)
    first, second = split(data, spec), split(data, spec)
    np.testing.assert_array_equal(first[0].features_p, second[0].features_p)
    np.testing.assert_array_equal(first[1].features, second[1].features)


def test_split_spec_validation():
    with pytest.raises(InvalidHyperparameter):
        SplitSpec("case-control", gamma_prime=Fraction(3, 2))
    with pytest.raises(InvalidHyperparameter):
        SplitSpec("single-training-set", labeled_fraction=Fraction(1, 4), gamma_prime=Fraction(1, 2))
    with pytest.raises(InvalidHyperparameter):
        SplitSpec("bootstrap", labeled_fraction=Fraction(1, 4))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
