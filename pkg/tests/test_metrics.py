"""Metric formulas against hand computations."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vabark.errors import ConfigError, DegenerateInputError
from vabark.metrics import accuracy, emit_report, evaluate_predictions, pearson_r, read_scatter, va_mae


class TestVaMae:
    def test_perfect_prediction(self):
        pairs = [(0.1, 0.2), (-0.5, 0.9)]
        assert va_mae(pairs, pairs) == 0.0

    def test_single_sample_both_modes(self):
        pred = [(0.1, 0.3)]
        truth = [(0.0, 0.6)]
        assert va_mae(pred, truth, "eq6") == pytest.approx(0.4, abs=1e-12)
        assert va_mae(pred, truth, "mean2") == pytest.approx(0.2, abs=1e-12)

    def test_two_sample_oracle(self):
        pred = [(0.1, 0.1), (0.3, 0.3)]
        truth = [(0.0, 0.0), (0.0, 0.0)]
        assert va_mae(pred, truth, "eq6") == pytest.approx(0.4, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            va_mae([(0, 0)], [(0, 0), (1, 1)])

    def test_eq6_equals_component_sum(self):
        rng = np.random.default_rng(0)
        pred = [(v, a) for v, a in zip(rng.uniform(-1, 1, 50), rng.uniform(0, 1, 50))]
        truth = [(v, a) for v, a in zip(rng.uniform(-1, 1, 50), rng.uniform(0, 1, 50))]
        v_mae = np.mean([abs(p[0] - t[0]) for p, t in zip(pred, truth)])
        a_mae = np.mean([abs(p[1] - t[1]) for p, t in zip(pred, truth)])
        assert va_mae(pred, truth, "eq6") == pytest.approx(v_mae + a_mae, abs=1e-12)

    @given(shift=st.floats(-5, 5))
    @settings(max_examples=30)
    def test_symmetry_and_translation_invariance(self, shift):
        rng = np.random.default_rng(1)
        a = [(v, x) for v, x in zip(rng.uniform(-1, 1, 20), rng.uniform(0, 1, 20))]
        b = [(v, x) for v, x in zip(rng.uniform(-1, 1, 20), rng.uniform(0, 1, 20))]
        assert va_mae(a, b) == pytest.approx(va_mae(b, a), abs=1e-12)
        a_s = [(v + shift, x + shift) for v, x in a]
        b_s = [(v + shift, x + shift) for v, x in b]
        assert va_mae(a_s, b_s) == pytest.approx(va_mae(a, b), abs=1e-9)


class TestPearson:
    def test_identity(self):
        x = [1.0, 2.0, 5.0, 7.0]
        assert pearson_r(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_negative_affine(self):
        x = np.array([0.2, 1.0, 3.0, 4.5])
        assert pearson_r(x, -2 * x + 3) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_computed_example(self):
        assert pearson_r([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)

    def test_constant_errors_out(self):
        with pytest.raises(DegenerateInputError):
            pearson_r([1, 1, 1], [1, 2, 3])
        with pytest.raises(DegenerateInputError):
            pearson_r([1, 2, 3], [5, 5, 5])

    @given(a=st.floats(0.01, 10), b=st.floats(-5, 5))
    @settings(max_examples=30)
    def test_positive_affine_invariance(self, a, b):
        rng = np.random.default_rng(2)
        x = rng.normal(0, 1, 30)
        y = rng.normal(0, 1, 30)
        r0 = pearson_r(x, y)
        assert pearson_r(a * x + b, y) == pytest.approx(r0, abs=1e-9)
        assert pearson_r(-a * x + b, y) == pytest.approx(-r0, abs=1e-9)


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_none_correct(self):
        assert accuracy([0, 0], [1, 1]) == 0.0

    def test_three_of_four(self):
        assert accuracy([1, 2, 3, 4], [1, 2, 3, 0]) == 0.75


def _scatter_rows(n, seed=0):
    rng = np.random.default_rng(seed)
    return [
        {
            "id": f"s{i:03d}",
            "pred_v": float(rng.uniform(-1, 1)), "true_v": float(rng.uniform(-1, 1)),
            "pred_a": float(rng.uniform(0, 1)), "true_a": float(rng.uniform(0, 1)),
            "emotion": "alert", "size": "large", "gender": "male",
        }
        for i in range(n)
    ]


def _report(n=40):
    rng = np.random.default_rng(3)
    tv = rng.uniform(-1, 1, n)
    ta = rng.uniform(0, 1, n)
    return evaluate_predictions(
        tv + rng.normal(0, 0.1, n), ta + rng.normal(0, 0.1, n), tv, ta,
        rng.integers(0, 8, n), rng.integers(0, 8, n),
        rng.integers(0, 3, n), rng.integers(0, 3, n),
        rng.integers(0, 2, n), rng.integers(0, 2, n),
    )


class TestEmitReport:
    def test_empty_set_no_partial_files(self, tmp_path):
        out = tmp_path / "out"
        with pytest.raises(ConfigError):
            emit_report(_report(), [], out)
        assert not out.exists() or not any(out.iterdir())

    def test_files_and_row_counts(self, tmp_path):
        rows = _scatter_rows(43)
        paths = emit_report(_report(), rows, tmp_path)
        scatter = read_scatter(paths["scatter"])
        assert len(scatter) == 43
        with open(paths["top_errors"]) as fh:
            n_top = sum(1 for _ in fh) - 1
        assert n_top == math.ceil(0.05 * 43)
        import json

        rep = json.loads(open(paths["report"]).read())
        assert rep["mae_mode"] == "eq6"
        assert rep["n_samples"] == 40

    def test_top_errors_are_the_worst(self, tmp_path):
        rows = _scatter_rows(40, seed=9)
        paths = emit_report(_report(), rows, tmp_path)
        errs = sorted(
            (abs(r["pred_v"] - r["true_v"]) + abs(r["pred_a"] - r["true_a"]) for r in rows),
            reverse=True,
        )
        import csv as csvmod

        with open(paths["top_errors"]) as fh:
            got = [float(r["va_error"]) for r in csvmod.DictReader(fh)]
        assert got == pytest.approx(errs[: len(got)], abs=1e-12)

    def test_scatter_roundtrip(self, tmp_path):
        rows = _scatter_rows(25, seed=4)
        paths = emit_report(_report(), rows, tmp_path)
        back = read_scatter(paths["scatter"])
        assert back == rows
