from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kanspoof.errors import ContractError, MetricError, ParseError
from kanspoof.metrics import (
    TdcfParams,
    TrialScores,
    compute_eer,
    compute_min_tdcf,
    det_curve,
    read_scores,
    write_scores,
)


def brute_force_det(bonafide, spoof):
    """Count errors trial by trial at every candidate threshold."""
    values = sorted(set(list(bonafide) + list(spoof)))
    thresholds = [-np.inf] + [(a + b) / 2.0 for a, b in zip(values, values[1:])] + [np.inf]
    curve = []
    for t in thresholds:
        fa = sum(1 for s in spoof if s >= t)
        miss = sum(1 for s in bonafide if s < t)
        curve.append((t, fa, miss))
    return curve


def sweep_eer_oracle(bonafide, spoof):
    """Walk the sweep until FA <= miss, then intersect that DET segment with FA = miss."""
    pts = [(Fraction(fa, len(spoof)), Fraction(m, len(bonafide))) for _, fa, m in brute_force_det(bonafide, spoof)]
    for i, (fa, m) in enumerate(pts):
        if fa == m:
            return float(fa)
        if fa < m:
            fa0, m0 = pts[i - 1]
            lam = (fa0 - m0) / ((fa0 - m0) - (fa - m))
            return float(fa0 + lam * (fa - fa0))
    raise AssertionError("the sweep always ends at FA = 0, miss = 1")


def tdcf_oracle(bonafide, spoof, p):
    c1 = p.p_target * p.c_miss - p.p_target * p.c_miss * p.asv_p_miss - p.p_nontarget * p.c_fa * p.asv_p_fa
    c2 = p.c_fa * p.p_spoof * p.asv_p_spoof_fa
    best = np.inf
    for _, fa, miss in brute_force_det(bonafide, spoof):
        best = min(best, (c1 * miss / len(bonafide) + c2 * fa / len(spoof)) / min(c1, c2))
    return best


def random_set(rng, size=None, ties=False):
    size = size or int(rng.integers(2, 201))
    n_bona = int(rng.integers(1, size))
    if ties:
        bonafide = rng.integers(0, 6, n_bona).astype(float)
        spoof = rng.integers(-2, 4, size - n_bona).astype(float)
    else:
        bonafide = rng.normal(1.0, 1.0, n_bona)
        spoof = rng.normal(-0.5, 1.0, size - n_bona)
    return bonafide, spoof


class TestEer:
    def test_perfect(self):
        assert compute_eer(TrialScores.from_arrays([2, 3], [0, 1]))[0] == 0.0

    def test_constant(self):
        assert compute_eer(TrialScores.from_arrays([1.0] * 4, [1.0] * 5))[0] == 0.5

    def test_six_trials(self):
        eer, threshold = compute_eer(TrialScores.from_arrays([0.9, 0.8, 0.4], [0.7, 0.3, 0.2]))
        assert eer == pytest.approx(1 / 3, abs=1e-15)
        assert 0.4 < threshold < 0.7

    def test_single_class(self):
        with pytest.raises(MetricError):
            compute_eer(TrialScores.from_arrays([1.0, 2.0], []))
        with pytest.raises(MetricError):
            det_curve(TrialScores.from_arrays([], [1.0]))

    @pytest.mark.parametrize("ties", [False, True])
    def test_oracle_equivalence(self, ties):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            bonafide, spoof = random_set(rng, ties=ties)
            assert compute_eer(TrialScores.from_arrays(bonafide, spoof))[0] == sweep_eer_oracle(bonafide, spoof)

    def test_monotone_transform(self):
        for seed in range(20):
            bonafide, spoof = random_set(np.random.default_rng(seed))
            a = compute_eer(TrialScores.from_arrays(bonafide, spoof))[0]
            b = compute_eer(TrialScores.from_arrays(np.exp(bonafide), np.exp(spoof)))[0]
            assert a == b

    def test_symmetry(self):
        for seed in range(20):
            bonafide, spoof = random_set(np.random.default_rng(seed))
            a = compute_eer(TrialScores.from_arrays(bonafide, spoof))[0]
            b = compute_eer(TrialScores.from_arrays(-spoof, -bonafide))[0]
            assert a == b

    def test_duplicated_trial(self):
        rng = np.random.default_rng(7)
        bonafide, spoof = random_set(rng, size=40)
        bonafide2 = np.append(bonafide, bonafide[0])
        assert compute_eer(TrialScores.from_arrays(bonafide2, spoof))[0] == sweep_eer_oracle(bonafide2, spoof)
        doubled = compute_eer(TrialScores.from_arrays(np.tile(bonafide, 2), np.tile(spoof, 2)))[0]
        assert doubled == compute_eer(TrialScores.from_arrays(bonafide, spoof))[0]

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.integers(-5, 5), min_size=1, max_size=30),
        st.lists(st.integers(-5, 5), min_size=1, max_size=30),
    )
    def test_oracle_property(self, bonafide, spoof):
        eer = compute_eer(TrialScores.from_arrays(bonafide, spoof))[0]
        assert 0.0 <= eer <= 1.0
        assert eer == sweep_eer_oracle(bonafide, spoof)


class TestDet:
    def test_minimal(self):
        curve = det_curve(TrialScores.from_arrays([1.0], [0.0]))
        assert [(fa, m) for _, fa, m in curve] == [(1.0, 0.0), (0.0, 0.0), (0.0, 1.0)]

    def test_against_counting(self):
        for seed in range(50):
            rng = np.random.default_rng(100 + seed)
            bonafide, spoof = random_set(rng, ties=seed % 2 == 1)
            got = det_curve(TrialScores.from_arrays(bonafide, spoof))
            expected = [(t, fa / len(spoof), m / len(bonafide)) for t, fa, m in brute_force_det(bonafide, spoof)]
            assert got == expected

    def test_monotone_and_bounded(self):
        bonafide, spoof = random_set(np.random.default_rng(3), size=200)
        curve = det_curve(TrialScores.from_arrays(bonafide, spoof))
        t, fa, miss = map(np.array, zip(*curve))
        assert np.all(np.diff(t) > 0)
        assert np.all(np.diff(fa) <= 0) and np.all(np.diff(miss) >= 0)
        assert (fa[0], miss[0]) == (1.0, 0.0) and (fa[-1], miss[-1]) == (0.0, 1.0)
        assert np.all((fa >= 0) & (fa <= 1) & (miss >= 0) & (miss <= 1))


class TestTdcf:
    def test_perfect(self):
        assert compute_min_tdcf(TrialScores.from_arrays([2, 3], [0, 1])) == 0.0

    def test_constant(self):
        assert compute_min_tdcf(TrialScores.from_arrays([0.5] * 3, [0.5] * 3)) == 1.0

    def test_against_oracle_and_bounds(self):
        params = TdcfParams()
        for seed in range(50):
            bonafide, spoof = random_set(np.random.default_rng(200 + seed), ties=seed % 3 == 0)
            value = compute_min_tdcf(TrialScores.from_arrays(bonafide, spoof), params)
            assert 0.0 <= value <= 1.0
            assert value == pytest.approx(tdcf_oracle(bonafide, spoof, params), rel=1e-12, abs=1e-15)

    def test_monotone_transform(self):
        bonafide, spoof = random_set(np.random.default_rng(9), size=150)
        a = compute_min_tdcf(TrialScores.from_arrays(bonafide, spoof))
        b = compute_min_tdcf(TrialScores.from_arrays(bonafide**3, spoof**3))
        assert a == b

    def test_zero_only_when_separable(self):
        bonafide, spoof = [1.0, 2.0, 0.1], [0.0, 0.5]
        assert compute_min_tdcf(TrialScores.from_arrays(bonafide, spoof)) > 0.0
        assert compute_min_tdcf(TrialScores.from_arrays(bonafide, [0.0, 0.05])) == 0.0

    def test_custom_params(self):
        params = TdcfParams(p_target=0.9, p_nontarget=0.05, p_spoof=0.05, asv_p_spoof_fa=0.5)
        bonafide, spoof = random_set(np.random.default_rng(11), size=80)
        value = compute_min_tdcf(TrialScores.from_arrays(bonafide, spoof), params)
        assert value == pytest.approx(tdcf_oracle(bonafide, spoof, params), rel=1e-12)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(p_target=0.5),
            dict(p_spoof=0.0, p_target=0.9905),
            dict(c_fa=0.0),
            dict(asv_p_miss=1.5),
            dict(asv_p_spoof_fa=0.0),
        ],
    )
    def test_invalid_params(self, kwargs):
        with pytest.raises(ContractError):
            TdcfParams(**kwargs).validate()


class TestTrialScores:
    def test_unique_ids(self):
        with pytest.raises(ContractError):
            TrialScores(["a", "a"], [0.0, 1.0], ["bonafide", "spoof"])

    def test_finite(self):
        with pytest.raises(ContractError):
            TrialScores(["a"], [np.nan], ["spoof"])

    def test_label_vocabulary(self):
        with pytest.raises(ContractError):
            TrialScores(["a"], [0.0], ["real"])


class TestFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        scores = TrialScores([f"t{i}" for i in range(30)], rng.normal(size=30) * 1e3, ["bonafide", "spoof"] * 15)
        write_scores(tmp_path / "s.txt", scores, tmp_path / "l.txt")
        assert read_scores(tmp_path / "s.txt", tmp_path / "l.txt") == scores

    def test_format(self, tmp_path):
        scores = TrialScores(["x"], [0.1], ["spoof"])
        write_scores(tmp_path / "s.txt", scores, tmp_path / "l.txt")
        assert (tmp_path / "s.txt").read_bytes() == b"x 0.10000000000000001\n"
        assert (tmp_path / "l.txt").read_bytes() == b"x spoof\n"

    def test_empty(self, tmp_path):
        (tmp_path / "s.txt").write_text("")
        (tmp_path / "l.txt").write_text("")
        scores = read_scores(tmp_path / "s.txt", tmp_path / "l.txt")
        assert len(scores) == 0
        with pytest.raises(MetricError):
            compute_eer(scores)

    def test_unknown_label(self, tmp_path):
        (tmp_path / "s.txt").write_text("a 1.0\nb 2.0\n")
        (tmp_path / "l.txt").write_text("a bonafide\nb fake\n")
        with pytest.raises(ParseError, match=":2"):
            read_scores(tmp_path / "s.txt", tmp_path / "l.txt")

    @pytest.mark.parametrize("line", ["a nan_value", "a 1.0 extra", "a inf", "zz 1.0"])
    def test_malformed_score_line(self, tmp_path, line):
        (tmp_path / "s.txt").write_text(f"b 0.5\n{line}\n")
        (tmp_path / "l.txt").write_text("a bonafide\nb spoof\n")
        with pytest.raises(ParseError) as info:
            read_scores(tmp_path / "s.txt", tmp_path / "l.txt")
        assert info.value.line == 2
