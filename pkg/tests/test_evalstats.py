import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visrep import evalstats as es

from golden_rows import GOLDEN_ROWS
from oracles import iqm_oracle


@pytest.fixture(scope="module")
def refs():
    return es.read_refs_csv(es.fixture_path("normalization_refs.csv"))


@pytest.fixture(scope="module")
def bc_table():
    return es.ScoreTable.read_csv(es.fixture_path("scores_offline_bc.csv"))


def test_normalize_spot_values(refs):
    # agent between anchors, and agent below an inverted anchor pair
    assert es.normalize_score(1262.2, refs["AirRaid"]) == pytest.approx(0.0990, abs=1e-3)
    assert es.normalize_score(668.2, refs["Asteroids"]) == pytest.approx(-1.459, abs=1e-3)


def test_normalize_anchor_endpoints(refs):
    ref = refs["Amidar"]
    assert es.normalize_score(ref.random_score, ref) == pytest.approx(0.0)
    assert es.normalize_score(ref.reference_score, ref) == pytest.approx(1.0)
    # inverted pair: the *random* anchor is the better one
    inv = refs["Asteroids"]
    assert inv.random_score > inv.reference_score
    assert es.normalize_score(inv.random_score, inv) == pytest.approx(1.0)
    assert es.normalize_score(inv.reference_score, inv) == pytest.approx(0.0)


def test_normalize_equal_anchors_rejected():
    ref = es.NormalizationRef("g", 5.0, 5.0, "dqn")
    with pytest.raises(ZeroDivisionError):
        es.normalize_score(6.0, ref)


def test_iqm_examples():
    assert es.iqm([1, 2, 3, 4]) == pytest.approx(2.5)
    assert es.iqm([7.0]) == pytest.approx(7.0)
    assert es.iqm([3, 3, 3]) == pytest.approx(3.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_iqm_matches_oracle_and_bounds(values):
    got = es.iqm(values)
    assert got == pytest.approx(iqm_oracle(values), rel=1e-9, abs=1e-9)
    assert min(values) - 1e-9 <= got <= max(values) + 1e-9


@given(st.floats(-100, 100), st.integers(1, 20))
def test_iqm_of_constant_is_constant(v, n):
    assert es.iqm([v] * n) == pytest.approx(v)


def test_optimality_gap_examples():
    assert es.optimality_gap([0.5, 1.5]) == pytest.approx(0.25)
    assert es.optimality_gap([-10.1]) == pytest.approx(11.1)
    assert es.optimality_gap([1.0, 2.0, 3.0]) == 0.0


def test_score_table_roundtrip(tmp_path):
    t = es.ScoreTable()
    t.add(es.ScoreRecord("Pong", "bc", 0, "online_rl", 17.25))
    t.add(es.ScoreRecord("Pong", "bc", 1, "online_rl", -3.0))
    path = tmp_path / "scores.csv"
    t.write_csv(path)
    back = es.ScoreTable.read_csv(path)
    assert [r.score for r in back.records] == [17.25, -3.0]
    assert back.records[0] == t.records[0]


def test_score_table_rejects_duplicates():
    t = es.ScoreTable()
    t.add(es.ScoreRecord("Pong", "bc", 0, "online_rl", 1.0))
    with pytest.raises(ValueError, match="duplicate"):
        t.add(es.ScoreRecord("Pong", "bc", 0, "online_rl", 2.0))


def test_score_csv_column_order_enforced(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("method,game,seed,protocol,score\nbc,Pong,0,online_rl,1.0\n")
    with pytest.raises(ValueError, match="columns"):
        es.ScoreTable.read_csv(path)


def test_bootstrap_deterministic_and_degenerate():
    grid = {"a": [1.0, 1.0, 1.0], "b": [2.0, 2.0]}
    ci1 = es.stratified_bootstrap_ci(grid, es.iqm, resamples=100, seed=3)
    ci2 = es.stratified_bootstrap_ci(grid, es.iqm, resamples=100, seed=3)
    assert ci1 == ci2
    # constant per-game values: every resample is identical, zero-width interval
    assert ci1[0] == pytest.approx(ci1[1])


def test_bootstrap_interval_orders_and_varies():
    rng = np.random.default_rng(0)
    grid = {f"g{i}": list(rng.normal(size=3)) for i in range(8)}
    lo, hi = es.stratified_bootstrap_ci(grid, es.iqm, resamples=500, seed=1)
    assert lo < hi
    other = es.stratified_bootstrap_ci(grid, es.iqm, resamples=500, seed=2)
    assert (lo, hi) != other  # different seed, different resamples


def test_aggregate_report_shape(bc_table, refs):
    rows = es.aggregate_report(bc_table, refs, resamples=10)
    # 3 distributions x 12 methods for the one protocol in this fixture
    assert len(rows) == 36
    by_key = {(r.protocol, r.distribution, r.method): r for r in rows}
    # zero-denominator game is dropped from ID aggregation
    assert by_key[("offline_bc", "id", "random")].n_games == 49
    assert by_key[("offline_bc", "near_ood", "random")].n_games == 10
    assert by_key[("offline_bc", "far_ood", "random")].n_games == 5


def test_aggregate_report_golden_spot_rows(bc_table, refs):
    rows = es.aggregate_report(bc_table, refs, resamples=10)
    by_key = {(r.protocol, r.distribution, r.method): r for r in rows}
    for key in [("offline_bc", "id", "random"),
                ("offline_bc", "id", "cql_m"),
                ("offline_bc", "far_ood", "random")]:
        giqm, _ = GOLDEN_ROWS[key]
        assert by_key[key].iqm == pytest.approx(giqm, abs=0.05)


def test_aggregate_report_regression_pin(bc_table, refs):
    # exact values computed by this implementation, pinned against drift
    rows = es.aggregate_report(bc_table, refs, resamples=10)
    by_key = {(r.protocol, r.distribution, r.method): r for r in rows}
    assert by_key[("offline_bc", "id", "random")].iqm == pytest.approx(0.0018304771, abs=1e-8)
    assert by_key[("offline_bc", "id", "random")].optimality_gap == pytest.approx(1.9440846153, abs=1e-8)
    assert by_key[("offline_bc", "far_ood", "random")].iqm == pytest.approx(0.0422594355, abs=1e-8)


def test_report_lines_render(bc_table, refs):
    rows = es.aggregate_report(bc_table, refs, resamples=10)
    lines = es.report_lines(rows)
    assert len(lines) == len(rows) + 1
    assert "IQM" in lines[0]
