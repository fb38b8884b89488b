import numpy as np
import pytest

from pseudodet import (
    Box,
    Dataset,
    Detection,
    DuplicateImageIdError,
    HistogramConfig,
    ImageInfo,
    InvalidThresholdPairError,
    MissingClassThresholdError,
    ThresholdSet,
    alpha_weight,
    alpha_weight_general,
    build_pseudo_dataset,
    emit_pseudo_dataset,
    filter_candidates,
    merge_datasets,
    split_merged,
)
from pseudodet.dataio import dataset_to_dict
from pseudodet.pseudolabel import bundle_counts


def uniform_ts(tau: float) -> ThresholdSet:
    return ThresholdSet("uniform", HistogramConfig(), tau, {})


def classwise_ts(per_class, empty=()) -> ThresholdSet:
    return ThresholdSet(
        "class-wise", HistogramConfig(), None, dict(per_class), frozenset(empty)
    )


def det(class_id, score, x=0.0) -> Detection:
    return Detection(class_id, Box(x, 0, x + 10, 10), score)


class TestAlphaWeight:
    def test_zero_at_threshold(self):
        assert alpha_weight(0.7, 0.7) == 0.0

    def test_one_at_perfect_score(self):
        for tau in (0.0, 0.3, 0.7, 0.99):
            assert alpha_weight(1.0, tau) == 1.0

    def test_midpoint(self):
        assert alpha_weight(0.85, 0.7) == pytest.approx(0.5, abs=1e-12)

    def test_below_threshold_weighs_one(self):
        # the branch ground-truth labels take: implicit perfect score
        assert alpha_weight(0.4, 0.7) == 1.0

    def test_degenerate_threshold_of_one(self):
        assert alpha_weight(1.0, 1.0) == 1.0
        assert alpha_weight(0.5, 1.0) == 1.0

    def test_monotone_in_score(self):
        taus = np.linspace(0.0, 0.95, 20)
        for tau in taus:
            scores = np.linspace(tau, 1.0, 50)
            values = [alpha_weight(float(s), float(tau)) for s in scores]
            assert all(b >= a for a, b in zip(values, values[1:]))
            assert all(0.0 <= v <= 1.0 for v in values)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            alpha_weight(1.2, 0.5)
        with pytest.raises(ValueError):
            alpha_weight(0.5, -0.1)


class TestAlphaWeightGeneral:
    def test_agrees_with_single_threshold_form_when_high_is_one(self):
        rng = np.random.default_rng(41)
        for _ in range(500):
            tau = float(rng.uniform(0.0, 0.99))
            s = float(rng.uniform(0.0, 1.0))
            if s == 1.0:
                continue
            assert alpha_weight_general(s, tau, 1.0) == alpha_weight(s, tau)

    def test_score_at_high_threshold_is_one(self):
        assert alpha_weight_general(0.9, 0.5, 0.9) == 1.0

    def test_ramp_value(self):
        assert alpha_weight_general(0.6, 0.5, 0.9) == pytest.approx(0.25, abs=1e-12)

    def test_zero_at_low_threshold(self):
        assert alpha_weight_general(0.5, 0.5, 0.9) == 0.0

    def test_invalid_pair(self):
        with pytest.raises(InvalidThresholdPairError):
            alpha_weight_general(0.5, 0.9, 0.9)
        with pytest.raises(InvalidThresholdPairError):
            alpha_weight_general(0.5, 0.9, 0.7)


class TestFilterCandidates:
    def test_uniform_threshold(self):
        cands = {7: [det(1, 0.6), det(1, 0.8)]}
        out = filter_candidates(cands, uniform_ts(0.7))
        assert [d.score for d in out[7]] == [0.8]

    def test_class_wise_thresholds(self):
        cands = {7: [det(1, 0.7), det(2, 0.7, x=50)]}
        out = filter_candidates(cands, classwise_ts({1: 0.6, 2: 0.9}))
        assert [d.class_id for d in out[7]] == [1]

    def test_image_with_nothing_left_is_removed(self):
        cands = {7: [det(1, 0.6)], 8: [det(1, 0.9)]}
        out = filter_candidates(cands, uniform_ts(0.7))
        assert set(out) == {8}

    def test_empty_class_yields_nothing(self):
        cands = {7: [det(5, 0.99)]}
        out = filter_candidates(cands, classwise_ts({}, empty=[5]))
        assert out == {}

    def test_unknown_class_raises(self):
        cands = {7: [det(9, 0.99)]}
        with pytest.raises(MissingClassThresholdError):
            filter_candidates(cands, classwise_ts({1: 0.6}))

    def test_survivors_unaltered_and_never_added(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            cands = {
                i: [det(int(rng.integers(1, 4)), float(rng.uniform(0, 1)), x=float(10 * j))
                    for j in range(int(rng.integers(0, 6)))]
                for i in range(5)
            }
            out = filter_candidates(cands, uniform_ts(0.6))
            for image_id, dets in out.items():
                assert set(dets) <= set(cands[image_id])

    def test_raising_tau_only_shrinks(self):
        rng = np.random.default_rng(43)
        cands = {
            i: [det(1, float(rng.uniform(0, 1)), x=float(10 * j)) for j in range(6)]
            for i in range(10)
        }
        kept_sizes = []
        for tau in (0.5, 0.6, 0.7, 0.8, 0.9):
            out = filter_candidates(cands, uniform_ts(tau))
            kept_sizes.append(sum(len(v) for v in out.values()))
        assert all(b <= a for a, b in zip(kept_sizes, kept_sizes[1:]))


class TestEmit:
    def test_empty(self):
        assert emit_pseudo_dataset({}, uniform_ts(0.7)) == []

    def test_alpha_attached(self):
        out = emit_pseudo_dataset({3: [det(1, 0.85)]}, uniform_ts(0.7))
        (image_id, labels), = out
        assert image_id == 3
        assert labels[0].alpha == pytest.approx(0.5, abs=1e-12)
        assert labels[0].source_tau == 0.7

    def test_score_equal_to_tau_gets_zero_weight(self):
        out = emit_pseudo_dataset({3: [det(1, 0.7)]}, uniform_ts(0.7))
        assert out[0][1][0].alpha == 0.0

    def test_unweighted_mode(self):
        out = emit_pseudo_dataset({3: [det(1, 0.85)]}, uniform_ts(0.7), weighted=False)
        assert out[0][1][0].alpha == 1.0

    def test_ordered_by_image_id(self):
        out = emit_pseudo_dataset(
            {9: [det(1, 0.9)], 2: [det(1, 0.8)]}, uniform_ts(0.5)
        )
        assert [image_id for image_id, _ in out] == [2, 9]


def make_pseudo(pool, image_scores, start_ann_id=100):
    ts = uniform_ts(0.5)
    filtered = {
        image_id: [det(1, s, x=20.0 * k) for k, s in enumerate(scores)]
        for image_id, scores in image_scores.items()
    }
    entries = emit_pseudo_dataset(filtered, ts)
    return build_pseudo_dataset(entries, pool, start_ann_id=start_ann_id)


class TestMergeAndSplit:
    def test_empty_pseudo_is_identity(self, tiny_labeled, tiny_pool):
        empty = Dataset(categories=list(tiny_pool.categories))
        merged = merge_datasets(tiny_labeled, empty)
        assert len(merged.images) == len(tiny_labeled.images)
        assert all(a.alpha == 1.0 and a.source == "gt" for a in merged.annotations)
        labeled_back, pseudo_back = split_merged(merged)
        assert dataset_to_dict(labeled_back) == dataset_to_dict(tiny_labeled)
        assert pseudo_back.images == []

    def test_cardinality_of_disjoint_union(self, tiny_labeled, tiny_pool):
        pseudo = make_pseudo(tiny_pool, {101: [0.9], 102: [0.8], 104: [0.7]})
        merged = merge_datasets(tiny_labeled, pseudo)
        assert len(merged.images) == 5
        gt_anns = [a for a in merged.annotations if a.source == "gt"]
        assert len(gt_anns) == 2
        assert all(a.alpha == 1.0 for a in gt_anns)

    def test_duplicate_image_ids_rejected(self, tiny_labeled):
        clash_pool = Dataset(
            images=[ImageInfo(1, 640, 480, "x.png")],
            annotations=[],
            categories=list(tiny_labeled.categories),
        )
        pseudo = make_pseudo(clash_pool, {1: [0.9]})
        with pytest.raises(DuplicateImageIdError):
            merge_datasets(tiny_labeled, pseudo)

    def test_round_trip_split_recovers_both_exactly(self, tiny_labeled, tiny_pool):
        pseudo = make_pseudo(tiny_pool, {101: [0.9, 0.6], 103: [0.55]})
        merged = merge_datasets(tiny_labeled, pseudo)
        labeled_back, pseudo_back = split_merged(merged)
        assert dataset_to_dict(labeled_back) == dataset_to_dict(tiny_labeled)
        assert dataset_to_dict(pseudo_back) == dataset_to_dict(pseudo)

    def test_pseudo_image_count_matches_emitted(self, tiny_pool):
        pseudo = make_pseudo(tiny_pool, {101: [0.9], 104: [0.8, 0.6]})
        assert len(pseudo.images) == 2
        assert len(pseudo.annotations) == 3
        assert all(a.source == "pseudo" for a in pseudo.annotations)

    def test_counts_invariant(self):
        assert bundle_counts(10, 100, 80, 60)["n_pseudo_images"] == 60
        with pytest.raises(ValueError):
            bundle_counts(10, 100, 80, 90)
        with pytest.raises(ValueError):
            bundle_counts(10, 50, 80, 40)
