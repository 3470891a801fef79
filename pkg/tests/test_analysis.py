"""Tests for record aggregation: intervals, curves, overlays, entropy."""

import json
import math

import numpy as np
import pytest

from banditbatch.analysis import (
    RunData,
    SummaryRow,
    SummaryTable,
    build_summary,
    confidence_interval,
    default_overlay_window,
    group_runs,
    load_run,
    load_runs,
    manifest_path_for,
    mislabeled_fraction_overlay,
    selection_occurrence_curve,
    weight_entropy,
    weight_entropy_series,
)

# two-sided 95% critical value of Student t with 4 degrees of freedom,
# from standard tables
T_CRIT_DF4 = 2.7764451052


class TestConfidenceInterval:
    def test_constant_values_zero_width(self):
        mean, hw = confidence_interval([3.0, 3.0, 3.0, 3.0, 3.0])
        assert mean == 3.0
        assert hw == 0.0

    def test_known_five_point_interval(self):
        # sample sd of 1..5 is sqrt(2.5); half width = t * sd / sqrt(5)
        mean, hw = confidence_interval([1.0, 2.0, 3.0, 4.0, 5.0])
        assert mean == pytest.approx(3.0)
        assert hw == pytest.approx(T_CRIT_DF4 * math.sqrt(2.5 / 5.0), rel=1e-9)

    def test_permutation_invariant(self):
        a = confidence_interval([0.4, 0.1, 0.3, 0.2])
        b = confidence_interval([0.1, 0.2, 0.3, 0.4])
        assert a == pytest.approx(b)

    def test_translation_shifts_mean_only(self):
        base = [0.12, 0.19, 0.15]
        m0, h0 = confidence_interval(base)
        m1, h1 = confidence_interval([v + 10.0 for v in base])
        assert m1 == pytest.approx(m0 + 10.0)
        assert h1 == pytest.approx(h0)

    def test_single_value_rejected(self):
        with pytest.raises(ValueError):
            confidence_interval([0.5])

    def test_confidence_range_validated(self):
        with pytest.raises(ValueError):
            confidence_interval([1.0, 2.0], confidence=1.0)


class TestOccurrenceCurve:
    def test_sorts_descending(self):
        curve = selection_occurrence_curve([3, 9, 1, 9, 0])
        assert curve.tolist() == [9, 9, 3, 1, 0]

    def test_empty_input(self):
        assert selection_occurrence_curve([]).size == 0

    def test_input_not_mutated(self):
        counts = np.array([1, 5, 2])
        selection_occurrence_curve(counts)
        assert counts.tolist() == [1, 5, 2]


class TestOverlay:
    def test_hand_example_window_two(self):
        # descending order is positions 0,1,2,3; mask there is 0,0,1,1
        frac = mislabeled_fraction_overlay(
            [5, 3, 2, 1], [False, False, True, True], window=2
        )
        assert frac.tolist() == pytest.approx([0.0, 0.5, 1.0])

    def test_window_one_is_sorted_mask(self):
        frac = mislabeled_fraction_overlay([1, 4, 2], [True, False, True], window=1)
        assert frac.tolist() == pytest.approx([0.0, 1.0, 1.0])

    def test_full_window_is_overall_fraction(self):
        frac = mislabeled_fraction_overlay(
            [7, 1, 3, 5], [True, False, False, True], window=4
        )
        assert frac.shape == (1,)
        assert frac[0] == pytest.approx(0.5)

    def test_ties_keep_lower_position_first(self):
        # equal counts: position 0 (corrupted) ranks before position 1
        frac = mislabeled_fraction_overlay([2, 2, 1], [True, False, False], window=1)
        assert frac.tolist() == pytest.approx([1.0, 0.0, 0.0])

    def test_least_selected_corrupted(self):
        # corrupted instances pushed to the tail shows up as a rising curve
        frac = mislabeled_fraction_overlay(
            [9, 8, 2, 1], [False, False, True, True], window=2
        )
        assert frac[-1] == pytest.approx(1.0)
        assert frac[0] == pytest.approx(0.0)

    def test_window_validation(self):
        with pytest.raises(ValueError):
            mislabeled_fraction_overlay([1, 2], [True, False], window=0)
        with pytest.raises(ValueError):
            mislabeled_fraction_overlay([1, 2], [True, False], window=3)
        with pytest.raises(ValueError):
            mislabeled_fraction_overlay([1, 2, 3], [True, False], window=1)


class TestWeightEntropy:
    def test_uniform_is_log_n(self):
        assert weight_entropy([1.0] * 8) == pytest.approx(math.log(8))

    def test_one_hot_is_zero(self):
        assert weight_entropy([0.0, 5.0, 0.0]) == 0.0

    def test_scale_invariant(self):
        w = [0.2, 1.1, 3.0, 0.4]
        assert weight_entropy(w) == pytest.approx(
            weight_entropy([10.0 * v for v in w])
        )

    def test_all_zero_counts_as_uniform(self):
        assert weight_entropy([0.0, 0.0, 0.0, 0.0]) == pytest.approx(math.log(4))

    def test_two_point_example(self):
        # (0.75, 0.25) entropy = ln 4 - 0.75 ln 3
        got = weight_entropy([3.0, 1.0])
        assert got == pytest.approx(math.log(4) - 0.75 * math.log(3))

    def test_validation(self):
        with pytest.raises(ValueError):
            weight_entropy([])
        with pytest.raises(ValueError):
            weight_entropy([1.0, -0.5])
        with pytest.raises(ValueError):
            weight_entropy([1.0, float("nan")])

    def test_series(self):
        series = weight_entropy_series([[1.0, 1.0], [0.0, 1.0]])
        assert series == pytest.approx([math.log(2), 0.0])


class TestSummaryTable:
    def test_best_above_last_rejected(self):
        row = SummaryRow("fpl", 0.4, 5, best_mean=0.3, best_half_width=0.0,
                         last_mean=0.2, last_half_width=0.0)
        with pytest.raises(ValueError):
            SummaryTable((row,))

    def test_equal_best_and_last_allowed(self):
        row = SummaryRow("fpl", 0.4, 5, 0.25, 0.0, 0.25, 0.0)
        assert SummaryTable((row,)).rows == (row,)


def _write_run(directory, sampler, ratio, seed, errors, *, corrupted=(1,),
               fail_after=None, entropies=None):
    """Write a synthetic record file (plus manifest) and return its path."""
    n = 4
    train_indices = list(range(10, 10 + n))
    lines = [json.dumps({
        "record": "meta",
        "format": "banditbatch-run",
        "schema": 1,
        "sampler": sampler,
        "noise_ratio": ratio,
        "seed": seed,
        "train_indices": train_indices,
    })]
    counts = [0] * n
    for epoch, err in enumerate(errors, start=1):
        counts = [c + epoch for c in counts]
        rec = {
            "record": "epoch",
            "epoch": epoch,
            "test_error": err,
            "selection_counts": list(counts),
        }
        if entropies is not None:
            rec["weight_entropy"] = entropies[epoch - 1]
        lines.append(json.dumps(rec))
        if fail_after == epoch:
            lines.append(json.dumps({
                "record": "failure", "epoch": epoch, "reason": "diverged",
            }))
            break
    path = directory / f"{sampler}_noise{ratio:g}_seed{seed}.jsonl"
    path.write_text("\n".join(lines) + "\n")
    manifest = manifest_path_for(path)
    manifest.write_text("".join(
        json.dumps({"index": train_indices[pos], "true_label": 0,
                    "observed_label": 1}) + "\n"
        for pos in corrupted
    ))
    return path


class TestRunLoading:
    def test_manifest_path_keeps_dotted_ratio(self):
        from pathlib import Path

        path = Path("/tmp/fpl_noise0.4_seed1.jsonl")
        assert manifest_path_for(path).name == "fpl_noise0.4_seed1.manifest.jsonl"

    def test_load_run_fields(self, tmp_path):
        path = _write_run(tmp_path, "fpl", 0.4, 3, [0.5, 0.3, 0.35])
        run = load_run(path)
        assert run.ok
        assert (run.sampler, run.noise_ratio, run.seed) == ("fpl", 0.4, 3)
        assert run.last_error == pytest.approx(0.35)
        assert run.best_error == pytest.approx(0.3)
        assert run.final_counts().tolist() == [6, 6, 6, 6]
        assert run.corrupted_mask.tolist() == [False, True, False, False]

    def test_load_run_failure_marks_not_ok(self, tmp_path):
        path = _write_run(tmp_path, "exp3", 0.4, 1, [0.5, 0.4], fail_after=1)
        run = load_run(path)
        assert not run.ok
        assert run.failure["reason"] == "diverged"

    def test_load_run_without_meta_rejected(self, tmp_path):
        path = tmp_path / "broken.jsonl"
        path.write_text(json.dumps({"record": "epoch", "test_error": 0.1}) + "\n")
        with pytest.raises(ValueError):
            load_run(path)

    def test_load_runs_skips_manifests_and_sorts(self, tmp_path):
        _write_run(tmp_path, "uniform", 0.4, 2, [0.5])
        _write_run(tmp_path, "fpl", 0.4, 1, [0.4])
        runs = load_runs(tmp_path)
        assert [r.sampler for r in runs] == ["fpl", "uniform"]

    def test_load_runs_empty_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_runs(tmp_path)

    def test_group_and_summary(self, tmp_path):
        _write_run(tmp_path, "fpl", 0.4, 1, [0.5, 0.30])
        _write_run(tmp_path, "fpl", 0.4, 2, [0.5, 0.40])
        _write_run(tmp_path, "uniform", 0.4, 1, [0.5, 0.45])
        _write_run(tmp_path, "exp3", 0.4, 9, [0.9], fail_after=1)
        runs = load_runs(tmp_path)
        groups = group_runs(runs)
        assert set(groups) == {("fpl", 0.4), ("uniform", 0.4)}
        assert [r.seed for r in groups[("fpl", 0.4)]] == [1, 2]
        table = build_summary(runs)
        by_sampler = {row.sampler: row for row in table.rows}
        assert by_sampler["fpl"].n_seeds == 2
        assert by_sampler["fpl"].last_mean == pytest.approx(0.35)
        assert by_sampler["fpl"].last_half_width is not None
        assert by_sampler["uniform"].last_half_width is None

    def test_entropy_series_round_trip(self, tmp_path):
        path = _write_run(tmp_path, "fpl", 0.4, 1, [0.5, 0.4],
                          entropies=[1.5, 1.2])
        assert load_run(path).entropy_series() == [1.5, 1.2]


def test_default_overlay_window_scales_with_train_size():
    assert default_overlay_window(50000) == 1000
    assert default_overlay_window(2000) == 40
    assert default_overlay_window(10) == 1
