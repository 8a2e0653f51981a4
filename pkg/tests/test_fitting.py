import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import recovery_schema, recovery_truth
from perfmodel.errors import ConfigError, EvaluationError, OptimizerAbort
from perfmodel.fitting import (
    FitConfig,
    FitObjective,
    FitResult,
    RegMode,
    cost_mae,
    cost_regularized,
    fit,
    lambda_sweep,
    predict,
)
from perfmodel.model import Bounds, ParamVector, default_bounds, evaluate
from perfmodel.optimizer import DeConfig
from perfmodel.schema import Dataset, NumericParam, ParamSchema, TrialRecord
from perfmodel.synth import SamplerConfig, SynthConfig, generate, sample_configs

QUICK = FitConfig(de=DeConfig(max_generations=150, tol=0.0), seeds=(1, 2, 3))


def _rec(k, c, g, t):
    return TrialRecord({"k": k}, {"c": c}, {"g": g}, t)


def _mae_oracle(schema, x, dataset):
    return sum(abs(r.measured_time - evaluate(schema, x, r)) for r in dataset) / len(dataset)


def _synthetic(schema, truth, n, seed, noise="none", sigma=0.0):
    items = sample_configs(SamplerConfig(schema, n, seed))
    ds, _ = generate(items, schema, SynthConfig(truth, noise, sigma, seed=seed))
    return ds


# --- RegMode ---------------------------------------------------------------------

def test_regmode_validation_and_normalization():
    with pytest.raises(ConfigError):
        RegMode("l3", 0.1)
    with pytest.raises(ConfigError):
        RegMode("l2", -1.0)
    assert RegMode().lam == 0.001
    assert RegMode("l2", 0.0).normalized() == RegMode("none", 0.0)
    assert RegMode("none", 5.0).to_dict() == {"kind": "none", "lambda": 0.0}
    assert RegMode("l1", 0.5).to_dict() == {"kind": "l1", "lambda": 0.5}


# --- costs -------------------------------------------------------------------------

def test_cost_mae_examples(tiny_schema):
    # q = 0, k term off: predictions are the selected level coefficient plus C
    x = ParamVector.from_parts(tiny_schema, {}, {"c": {"x": 11.0, "y": 18.0}}, {}, 0.0)
    assert cost_mae(tiny_schema, Dataset(tiny_schema, [_rec(1.0, "x", 1.0, 11.0)]), x) == 0.0
    assert cost_mae(tiny_schema, Dataset(tiny_schema, [_rec(1.0, "x", 1.0, 10.0)]),
                    ParamVector.from_parts(tiny_schema, {}, {"c": {"x": 8.0}})) == 2.0
    two = Dataset(tiny_schema, [_rec(1.0, "x", 1.0, 10.0), _rec(2.0, "y", 2.0, 20.0)])
    assert cost_mae(tiny_schema, two, x) == 1.5


def test_cost_regularized_examples(tiny_schema):
    ds = Dataset(tiny_schema, [_rec(2.0, "x", 4.0, 5.0)])
    perfect_c = ParamVector.from_parts(tiny_schema, constant=5.0)
    assert cost_regularized(tiny_schema, ds, perfect_c, RegMode("l2", 3.0)) == 0.0
    x = ParamVector(tiny_schema, [0.5, 1.0, 0.0, 0.0, 0.3, 5.0])
    assert cost_regularized(tiny_schema, ds, x, RegMode("none")) == cost_mae(tiny_schema, ds, x)
    # one coefficient a = 2 with power 0, C = 5, perfect fit: l2 penalty 0.1 * 4
    s = ParamSchema((NumericParam("k", (3.0,)),))
    one = Dataset(s, [TrialRecord({"k": 3.0}, {}, {}, 7.0)])
    assert cost_regularized(s, one, [2.0, 0.0, 5.0], RegMode("l2", 0.1)) == pytest.approx(0.4, rel=1e-15)
    assert cost_regularized(s, one, [2.0, 0.0, 5.0], RegMode("l1", 0.1)) == pytest.approx(0.2, rel=1e-15)


def test_cost_matches_scalar_oracle():
    s = recovery_schema()
    ds = _synthetic(s, recovery_truth(s), 60, 3, "gaussian_relative", 0.1)
    rng = np.random.default_rng(0)
    b = default_bounds(s)
    for _ in range(5):
        x = ParamVector(s, b.lo + rng.random(len(b)) * (b.hi - b.lo) * 0.3)
        assert cost_mae(s, ds, x) == pytest.approx(_mae_oracle(s, x, ds), rel=1e-12)


def test_objective_matches_per_vector_cost():
    s = recovery_schema()
    ds = _synthetic(s, recovery_truth(s), 30, 1)
    rng = np.random.default_rng(5)
    b = default_bounds(s)
    X = b.lo + rng.random((8, len(b))) * (b.hi - b.lo) * 0.2
    reg = RegMode("l1", 0.01)
    got = FitObjective(s, ds, reg)(X)
    want = [cost_regularized(s, ds, row, reg) for row in X]
    # reduction order over records may differ with the batch width, so allow a few ulps
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_cost_errors(tiny_schema):
    with pytest.raises(ConfigError):
        cost_mae(tiny_schema, Dataset(tiny_schema, []), np.zeros(6))
    with pytest.raises(ConfigError):
        cost_mae(tiny_schema, Dataset(tiny_schema, [_rec(1.0, "x", 1.0, 1.0)]), np.zeros(4))
    s = ParamSchema((NumericParam("k", (1e-300, 1.0)),))
    ds = Dataset(s, [TrialRecord({"k": 1.0}, {}, {}, 1.0), TrialRecord({"k": 1e-300}, {}, {}, 1.0)])
    with pytest.raises(EvaluationError, match="record 2"):
        cost_mae(s, ds, [1.0, -5.0, 0.0])


slot_values = st.lists(st.floats(-5.0, 5.0), min_size=5, max_size=5)


@given(body=slot_values, c=st.floats(0.0, 50.0), lam=st.floats(1e-6, 10.0),
       kind=st.sampled_from(["l1", "l2"]))
@settings(max_examples=100, deadline=None)
def test_penalty_strictly_positive_iff_body_nonzero(tiny_schema, body, c, lam, kind):
    body = [abs(body[0]), body[1], abs(body[2]), abs(body[3]), body[4]]
    ds = Dataset(tiny_schema, [_rec(2.0, "x", 2.0, 3.0), _rec(3.0, "y", 4.0, 8.0)])
    x = np.array(body + [c])
    base = cost_mae(tiny_schema, ds, x)
    reg = cost_regularized(tiny_schema, ds, x, RegMode(kind, lam))
    expected = lam * (np.abs(body).sum() if kind == "l1" else np.square(body).sum())
    assume(expected > 1e-9 * max(base, 1.0))  # otherwise lost to rounding in base + penalty
    assert reg > base
    assert reg - base == pytest.approx(expected, rel=1e-9)
    zero = np.zeros(6)
    zero[-1] = c
    assert cost_regularized(tiny_schema, ds, zero, RegMode(kind, lam)) == cost_mae(tiny_schema, ds, zero)


@given(c1=st.floats(0.0, 100.0), c2=st.floats(0.0, 100.0), lam=st.floats(1e-4, 10.0),
       kind=st.sampled_from(["l1", "l2"]))
@settings(max_examples=50, deadline=None)
def test_constant_not_penalized(tiny_schema, c1, c2, lam, kind):
    ds = Dataset(tiny_schema, [_rec(2.0, "x", 2.0, 3.0), _rec(3.0, "y", 4.0, 80.0)])
    x1 = np.array([1.5, 0.5, 2.0, 3.0, -0.5, c1])
    x2 = x1.copy()
    x2[-1] = c2
    reg = RegMode(kind, lam)
    d_mae = cost_mae(tiny_schema, ds, x2) - cost_mae(tiny_schema, ds, x1)
    d_reg = cost_regularized(tiny_schema, ds, x2, reg) - cost_regularized(tiny_schema, ds, x1, reg)
    assert d_reg == pytest.approx(d_mae, abs=1e-9)


@given(delta=st.floats(0.0, 20.0), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_gauge_shift_between_groups(delta, seed):
    s = recovery_schema()
    ds = _synthetic(s, recovery_truth(s), 40, seed % 1000)
    rng = np.random.default_rng(seed)
    x = rng.uniform(25.0, 60.0, 14)  # 3 x (a, p), 3 + 2 levels, 2 q, C
    x[1:6:2] = rng.uniform(-2, 2, 3)
    x[11:13] = rng.uniform(-1, 0, 2)
    y = x.copy()
    y[6:9] += delta   # act levels
    y[9:11] -= delta  # opt levels
    a, b = cost_mae(s, ds, x), cost_mae(s, ds, y)
    assert abs(a - b) <= 1e-12 * max(abs(a), 1e-300) + 1e-12


# --- fit -------------------------------------------------------------------------

def test_fit_single_record(tiny_schema):
    ds = Dataset(tiny_schema, [_rec(3.0, "y", 2.0, 42.5)])
    res = fit(ds, ds, tiny_schema, QUICK)
    assert res.train_metrics.mae <= 1e-3
    assert res.test_metrics.mae <= 1e-3


def test_fit_is_deterministic():
    s = recovery_schema()
    ds = _synthetic(s, recovery_truth(s), 80, 2)
    cfg = FitConfig(de=DeConfig(max_generations=40, tol=0.0), seeds=(4, 5))
    a, b = fit(ds, None, s, cfg), fit(ds, None, s, cfg)
    assert a.to_dict() == b.to_dict()
    assert fit(ds, None, s, cfg, workers=2).to_dict() == a.to_dict()


def test_fit_result_structure():
    s = recovery_schema()
    data = _synthetic(s, recovery_truth(s), 120, 4)
    train, test = Dataset(s, data.records[:80]), Dataset(s, data.records[80:])
    cfg = dataclasses.replace(QUICK, reg=RegMode("l2", 0.01))
    res = fit(train, test, s, cfg)
    costs = [sf.cost for sf in res.per_seed]
    assert res.representative_cost == min(costs)
    assert res.representative == res.per_seed[int(np.argmin(costs))].vector
    stack = np.array([sf.vector.values for sf in res.per_seed])
    np.testing.assert_array_equal(res.mean, stack.mean(axis=0))
    np.testing.assert_array_equal(res.std, stack.std(axis=0, ddof=0))
    # metrics use the raw predictions, the recorded cost includes the penalty
    rep = res.representative
    assert res.train_metrics.mae == pytest.approx(cost_mae(s, train, rep), rel=1e-12)
    assert res.representative_cost == pytest.approx(
        cost_regularized(s, train, rep, RegMode("l2", 0.01)), rel=1e-12)
    assert res.test_metrics.n == 40
    assert FitResult.from_dict(res.to_dict()).to_dict() == res.to_dict()


def test_single_seed_std_zero(tiny_schema):
    ds = Dataset(tiny_schema, [_rec(1.0, "x", 1.0, 3.0), _rec(2.0, "y", 2.0, 4.0)])
    res = fit(ds, None, tiny_schema, dataclasses.replace(QUICK, seeds=(7,)))
    assert np.all(res.std == 0)
    assert res.test_metrics is None


def test_fit_config_checks(tiny_schema):
    with pytest.raises(ConfigError):
        FitConfig(seeds=(1, 1))
    with pytest.raises(ConfigError):
        FitConfig(seeds=())
    ds = Dataset(tiny_schema, [_rec(1.0, "x", 1.0, 3.0)])
    with pytest.raises(ConfigError):
        fit(ds, None, tiny_schema, FitConfig(bounds=Bounds([0.0], [1.0])))
    with pytest.raises(ConfigError):
        fit(Dataset(tiny_schema, []), None, tiny_schema, QUICK)


def test_fit_abort_names_seed():
    s = ParamSchema((NumericParam("k", (1e-300,)),))
    ds = Dataset(s, [TrialRecord({"k": 1e-300}, {}, {}, 1.0)])
    cfg = FitConfig(de=DeConfig(max_generations=5), seeds=(3, 4),
                    bounds=Bounds([1.0, -5.0, 0.0], [2.0, -4.0, 1.0]))
    with pytest.raises(OptimizerAbort, match="seed 3"):
        fit(ds, None, s, cfg)


def test_noiseless_recovery_small():
    s = recovery_schema()
    data = _synthetic(s, recovery_truth(s), 300, 8)
    train, test = Dataset(s, data.records[:200]), Dataset(s, data.records[200:])
    res = fit(train, test, s, FitConfig(seeds=(1, 2, 3)))
    truth_pred = predict(s, recovery_truth(s), test.records)
    np.testing.assert_allclose(truth_pred, test.times, rtol=1e-12)  # generator's own predictions
    assert res.test_metrics.mape <= 0.02


# --- sweep ----------------------------------------------------------------------

def test_lambda_sweep_order_and_identity():
    s = recovery_schema()
    data = _synthetic(s, recovery_truth(s), 90, 6)
    train, test = Dataset(s, data.records[:60]), Dataset(s, data.records[60:])
    cfg = FitConfig(de=DeConfig(max_generations=60, tol=0.0), seeds=(1, 2))
    entries = lambda_sweep(train, test, s, cfg, [1.0, 0.0, 1e-3])
    assert [e.lam for e in entries] == [1.0, 0.0, 1e-3]
    plain = fit(train, test, s, cfg)
    assert entries[1].result.to_dict() == plain.to_dict()
    assert entries[2].result.reg == RegMode("l2", 1e-3)
    assert all(e.r2 is not None for e in entries)
    threaded = lambda_sweep(train, test, s, cfg, [1.0, 0.0, 1e-3], workers=3)
    assert [e.result.to_dict() for e in threaded] == [e.result.to_dict() for e in entries]


def test_lambda_sweep_noiseless_trends():
    s = recovery_schema()
    data = _synthetic(s, recovery_truth(s), 300, 12)
    train, test = Dataset(s, data.records[:200]), Dataset(s, data.records[200:])
    cfg = FitConfig(de=DeConfig(max_generations=300, tol=0.0), seeds=(1, 2))
    e0, e3, e1 = lambda_sweep(train, test, s, cfg, [0.0, 1e-3, 1.0])
    assert e3.r2 >= e1.r2
    body = lambda e: np.abs(e.representative.values[:-1]).sum()
    assert body(e1) <= body(e0)


@pytest.mark.parametrize("lambdas", [[], [0.1, -1.0]])
def test_lambda_sweep_rejects(tiny_schema, lambdas):
    ds = Dataset(tiny_schema, [_rec(1.0, "x", 1.0, 3.0)])
    with pytest.raises(ConfigError):
        lambda_sweep(ds, None, tiny_schema, QUICK, lambdas)
