import json

import numpy as np
import pytest

from mptrom.adapt import (
    AdaptConfig,
    IntervalError,
    interval_max_errors,
    run_adaptive,
    select_new_snapshots,
)
from mptrom.certify import StabilityConstant
from mptrom.errors import EmptyInterval, EmptyIntervalWarning, NoCandidates


def cert(v):
    return np.full((3, 3), float(v))


def test_intervals_half_open_last_closed():
    grid = np.array([1.0, 2.0, 3.0, 4.0])
    certs = [cert(v) for v in (1, 5, 2, 7)]
    iv = interval_max_errors(grid, certs, [1.0, 3.0, 4.0])
    assert [(x.index, x.value, x.argmax) for x in iv] == [(0, 5.0, 2.0), (1, 7.0, 4.0)]


def test_empty_interval_warns_and_all_empty_raises():
    with pytest.warns(EmptyIntervalWarning):
        iv = interval_max_errors([1.0, 1.5], [cert(1), cert(2)], [1.0, 2.0, 3.0])
    assert len(iv) == 1
    with pytest.raises(EmptyInterval), pytest.warns(EmptyIntervalWarning):
        interval_max_errors([10.0], [cert(1)], [1.0, 2.0])


def make(index, value, argmax, lo=None, hi=None):
    return IntervalError(index, lo or argmax / 2, hi or argmax * 2, value, argmax)


def test_select_top_n_star_one_per_interval():
    ivs = [make(0, 1.0, 1.5), make(1, 9.0, 3.0), make(2, 5.0, 6.0)]
    assert select_new_snapshots(ivs, [1.0], n_star=2) == [3.0, 6.0]
    assert select_new_snapshots(ivs, [1.0], n_star=1) == [3.0]


def test_select_falls_back_to_log_midpoint():
    ivs = [IntervalError(0, 1.0, 4.0, 3.0, 4.0)]
    assert select_new_snapshots(ivs, [1.0, 4.0], n_star=1) == [2.0]


def test_select_theta_rule_and_no_candidates():
    ivs = [make(0, 1.0, 1.5), make(1, 10.0, 3.0), make(2, 6.0, 6.0)]
    assert select_new_snapshots(ivs, [], theta=0.5) == [3.0, 6.0]
    with pytest.raises(NoCandidates):
        select_new_snapshots([IntervalError(0, 1.0, 4.0, 1.0, 4.0)], [1.0, 2.0, 4.0])
    with pytest.raises(NoCandidates):
        select_new_snapshots([], [])


@pytest.mark.parametrize(
    "kwargs", [{"tol_delta": 0}, {"n_star": 0}, {"max_k": 1}, {"theta": 1.5}, {"normalization": "x"}]
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        AdaptConfig(**kwargs)


def test_run_adaptive_stops_on_tolerance(small_sphere):
    cfg = AdaptConfig(tol_delta=1e9, output_frequencies=np.geomspace(1e2, 1e8, 20))
    rom, sig, state = run_adaptive(small_sphere, np.geomspace(1e2, 1e8, 3), cfg, stability=StabilityConstant(1e-5))
    assert state.stopped_reason == "tolerance" and state.k == 1
    assert len(sig) == 20 and sig.certificates is not None


def test_run_adaptive_grows_and_serializes(small_sphere):
    cfg = AdaptConfig(tol_delta=1e-30, max_k=3, output_frequencies=np.geomspace(1e2, 1e8, 30))
    rom, _, state = run_adaptive(small_sphere, np.geomspace(1e2, 1e8, 3), cfg)
    assert [r["N"] for r in state.records] == [3, 5, 7]
    assert state.stopped_reason == "max_k"
    lams = [r["lambda"] for r in state.records]
    assert lams[-1] < lams[0]
    doc = json.loads(state.to_json())
    assert doc["iterations"][0]["new_omegas"] == state.records[0]["new_omegas"]
    assert len(doc["snapshot_frequencies"]) == 7
    assert state.alpha_lb > 0
