import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import recovery_schema, recovery_truth
from perfmodel.errors import ConfigError
from perfmodel.model import ParamVector, default_bounds, evaluate
from perfmodel.schema import Assignment, CategoricalParam, NumericParam, ParamSchema, default_schema
from perfmodel.synth import (
    NOISE_CLIP,
    SamplerConfig,
    SynthConfig,
    default_ground_truth,
    generate,
    sample_configs,
)


def test_sample_reference_schema():
    s = default_schema()
    items = sample_configs(SamplerConfig(s, 1500, 7))
    assert len(items) == 1500
    doms = {p.name: set(p.domain) for p in s.intrinsic_numeric + s.extrinsic}
    levels = {c.name: set(c.levels) for c in s.intrinsic_categorical}
    for a in items:
        assert all(a.numeric_values[n] in doms[n] for n in s.numeric_names)
        assert all(a.extrinsic_values[n] in doms[n] for n in s.extrinsic_names)
        assert all(a.categorical_values[n] in levels[n] for n in s.categorical_names)


def test_sample_singleton_domains():
    s = ParamSchema((NumericParam("k", (3.0,)),), (CategoricalParam("c", ("x", "y")),),
                    (NumericParam("g", (2.0,)),))
    (a,) = sample_configs(SamplerConfig(s, 1, 0))
    assert a.numeric_values == {"k": 3.0} and a.extrinsic_values == {"g": 2.0}


def test_sample_deterministic():
    s = default_schema()
    assert sample_configs(SamplerConfig(s, 50, 3)) == sample_configs(SamplerConfig(s, 50, 3))
    assert sample_configs(SamplerConfig(s, 50, 3)) != sample_configs(SamplerConfig(s, 50, 4))


def test_sample_rejects_zero_trials():
    with pytest.raises(ConfigError):
        SamplerConfig(default_schema(), 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sample_marginals_uniform(seed):
    s = ParamSchema((NumericParam("k", (2.0, 3.0, 4.0, 5.0)),), (CategoricalParam("c", ("a", "b", "c", "d")),))
    items = sample_configs(SamplerConfig(s, 10_000, seed))
    for values in ([a.numeric_values["k"] for a in items], [a.categorical_values["c"] for a in items]):
        _, counts = np.unique(values, return_counts=True)
        freq = counts / len(items)
        assert len(freq) == 4 and np.all((freq >= 0.22) & (freq <= 0.28))


# --- generation ---------------------------------------------------------------

def _setup(n=40, seed=0):
    s = recovery_schema()
    return s, recovery_truth(s), sample_configs(SamplerConfig(s, n, seed))


def test_noiseless_equals_model():
    s, truth, items = _setup()
    ds, groups = generate(items, s, SynthConfig(truth))
    assert ds.times.tolist() == [evaluate(s, truth, a) for a in items]
    assert all(len(g.repetitions) == 3 for g in groups)
    assert groups[0].trial_id == "trial-00001"


def test_zero_sigma_matches_no_noise():
    s, truth, items = _setup()
    a, _ = generate(items, s, SynthConfig(truth))
    b, _ = generate(items, s, SynthConfig(truth, "gaussian_relative", 0.0, seed=5))
    assert a == b


def test_noisy_median_is_a_repetition():
    s, truth, items = _setup(200)
    ds, groups = generate(items, s, SynthConfig(truth, "gaussian_relative", 0.05, seed=3))
    for rec, g in zip(ds.records, groups):
        assert rec.measured_time in g.repetitions
        assert rec.measured_time == sorted(g.repetitions)[1]
        true = evaluate(s, truth, g.assignment)
        assert all(abs(r / true - 1) <= NOISE_CLIP * 0.05 + 1e-12 for r in g.repetitions)


def test_noise_deterministic_and_positive():
    s, truth, items = _setup(100)
    cfg = SynthConfig(truth, "gaussian_relative", 0.5, repetitions=4, seed=9)
    a, ga = generate(items, s, cfg)
    b, gb = generate(items, s, cfg)
    assert a == b and ga == gb
    assert all(t > 0 for g in ga for t in g.repetitions)
    rel = np.array([np.array(g.repetitions) / evaluate(s, truth, g.assignment) - 1 for g in ga])
    assert abs(rel.std() - 0.5) < 0.05


def test_truth_outside_bounds_rejected():
    s, truth, items = _setup()
    bad = truth.values.copy()
    bad[1] = 7.0  # power above 5
    with pytest.raises(ConfigError, match="kernel.p"):
        generate(items, s, SynthConfig(ParamVector(s, bad)))


def test_non_positive_truth_rejected():
    s, _, items = _setup()
    with pytest.raises(ConfigError, match="non-positive"):
        generate(items, s, SynthConfig(ParamVector(s, np.zeros(14))))


def test_config_validation():
    s, truth, _ = _setup()
    with pytest.raises(ConfigError):
        SynthConfig(truth, "uniform", 0.1)
    with pytest.raises(ConfigError):
        SynthConfig(truth, "gaussian_relative", -0.1)
    with pytest.raises(ConfigError):
        SynthConfig(truth, repetitions=0)


def test_empty_assignments():
    s, truth, _ = _setup()
    ds, groups = generate([], s, SynthConfig(truth))
    assert len(ds) == 0 and groups == []


@given(q=st.floats(-5, 5), e=st.sampled_from([1.0, 2.0, 4.0, 8.0]))
@settings(max_examples=50, deadline=None)
def test_doubling_extrinsic_scales_by_power(q, e):
    s = ParamSchema((NumericParam("k", (3.0,)),), (), (NumericParam("g", (e, 2 * e)),))
    c = 1.5
    truth = ParamVector(s, [4.0, 0.5, q, c])
    a1 = Assignment({"k": 3.0}, {}, {"g": e})
    a2 = Assignment({"k": 3.0}, {}, {"g": 2 * e})
    ds, _ = generate([a1, a2], s, SynthConfig(truth))
    t1, t2 = ds.times - c
    assert t2 == pytest.approx(2.0 ** q * t1, rel=1e-9)
    if q == int(q):
        truth = ParamVector(s, [4.0, 0.5, q, 0.0])
        t1, t2 = generate([a1, a2], s, SynthConfig(truth))[0].times
        assert t2 == 2.0 ** q * t1


def test_default_ground_truth():
    s = default_schema()
    truth = default_ground_truth(s)
    assert default_bounds(s).contains(truth.values)
    assert truth.extrinsic_powers == {"ngpus": -0.99, "batchsize": -0.74}
    ds, _ = generate(sample_configs(SamplerConfig(s, 300, 1)), s, SynthConfig(truth))
    assert np.all(ds.times > 0)
