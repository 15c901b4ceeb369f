"""Search-space declaration, sampling, validation, encoding, refinement."""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from fidopt.space import (
    Condition,
    InsufficientElitesError,
    ParamSpec,
    SearchSpace,
    SpaceError,
    When,
    build_cnn_space,
    decode,
    encode,
    max_conv_layers,
    refine,
    sample,
    sample_batch,
    validate,
)
from fidopt.utils import spawn_rng


def trial(tid, config, objective):
    return SimpleNamespace(trial_id=tid, config=config, objective=objective)


@pytest.fixture
def lr_space():
    return SearchSpace((ParamSpec("lr", "continuous", low=1e-5, high=1.0, scale="log10"),))


@pytest.fixture
def cond_space():
    return SearchSpace(
        (
            ParamSpec("n_conv", "integer", low=1, high=2),
            ParamSpec("f2", "integer", low=8, high=128, scale="log10"),
        ),
        (Condition("f2", "n_conv", When("ge", value=2)),),
    )


# ---------------------------------------------------------------------------
# declarations
# ---------------------------------------------------------------------------


def test_param_invariants_enforced():
    with pytest.raises(SpaceError):
        ParamSpec("x", "continuous", low=1.0, high=0.0)
    with pytest.raises(SpaceError):
        ParamSpec("x", "continuous", low=0.0, high=1.0, scale="log10")
    with pytest.raises(SpaceError):
        ParamSpec("x", "categorical", choices=())
    with pytest.raises(SpaceError):
        ParamSpec("x", "categorical", choices=("a", "a"))
    with pytest.raises(SpaceError):
        ParamSpec("x", "integer", low=1.5, high=3)


def test_space_rejects_duplicate_names_and_cycles():
    p = ParamSpec("a", "continuous", low=0, high=1)
    with pytest.raises(SpaceError):
        SearchSpace((p, ParamSpec("a", "integer", low=0, high=1)))
    a = ParamSpec("a", "integer", low=0, high=3)
    b = ParamSpec("b", "integer", low=0, high=3)
    with pytest.raises(SpaceError):
        SearchSpace(
            (a, b),
            (
                Condition("a", "b", When("ge", value=1)),
                Condition("b", "a", When("ge", value=1)),
            ),
        )
    with pytest.raises(SpaceError):
        SearchSpace(
            (a, b),
            (Condition("b", "a", When("ge", value=1)), Condition("b", "a", When("ge", value=2))),
        )


def test_topological_order_puts_parents_first():
    sp = build_cnn_space(32, 128)
    topo = sp.topological_order
    assert topo.index("n_conv") < topo.index("filters_2")
    assert topo.index("n_fc") < topo.index("units_3")


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------


def test_sample_within_bounds():
    sp = SearchSpace((ParamSpec("x", "continuous", low=0.0, high=1.0),))
    cfg = sample(sp, spawn_rng(123))
    assert 0.0 <= cfg["x"] <= 1.0


def test_sample_respects_conditions(cond_space):
    rng = spawn_rng(3)
    saw_both = set()
    for _ in range(100):
        cfg = sample(cond_space, rng)
        saw_both.add(cfg["n_conv"])
        assert ("f2" in cfg) == (cfg["n_conv"] == 2)
    assert saw_both == {1, 2}


def test_sample_log_uniform_monte_carlo(lr_space):
    # fraction of draws below 10**-2.5 should sit at 1/2 for a log-uniform law
    rng = spawn_rng(7)
    n = 10_000
    below = sum(sample(lr_space, rng)["lr"] < 10**-2.5 for _ in range(n))
    assert abs(below / n - 0.5) <= 0.02


def test_sample_validate_round_trip_cnn():
    sp = build_cnn_space(32, 128)
    rng = spawn_rng(11)
    for _ in range(1000):
        assert not validate(sp, sample(sp, rng))


def test_sample_batch_rows_are_valid_samples():
    sp = build_cnn_space(32, 128)
    cfgs = sample_batch(sp, spawn_rng(5), 200)
    assert len(cfgs) == 200
    for cfg in cfgs:
        assert not validate(sp, cfg)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def test_validate_out_of_bounds():
    sp = SearchSpace((ParamSpec("x", "continuous", low=0.0, high=1.0),))
    bad = validate(sp, {"x": 1.5})
    assert [(v.param, v.rule) for v in bad] == [("x", "out of bounds")]


def test_validate_inactive_present(cond_space):
    bad = validate(cond_space, {"n_conv": 1, "f2": 16})
    assert [(v.param, v.rule) for v in bad] == [("f2", "inactive parameter present")]


def test_validate_missing_and_unknown(cond_space):
    bad = validate(cond_space, {"n_conv": 2, "zzz": 1})
    rules = {(v.param, v.rule) for v in bad}
    assert ("zzz", "unknown parameter") in rules
    assert ("f2", "missing parameter") in rules


def test_validate_type_rules():
    sp = SearchSpace(
        (
            ParamSpec("k", "integer", low=1, high=5),
            ParamSpec("c", "categorical", choices=("a", "b")),
        )
    )
    assert validate(sp, {"k": 2.5, "c": "a"})[0].rule == "wrong type"
    assert validate(sp, {"k": 2, "c": "z"})[0].rule == "not in choices"
    assert not validate(sp, {"k": 2, "c": "a"})


# ---------------------------------------------------------------------------
# encode / decode
# ---------------------------------------------------------------------------


def test_encode_log_param_derived_value(lr_space):
    # (log10(1e-3) - log10(1e-5)) / (log10(1) - log10(1e-5)) = 2/5
    x = encode(lr_space, {"lr": 1e-3})
    assert x[0] == pytest.approx(0.4, abs=1e-12)


def test_encode_bounds_map_to_unit_interval(lr_space):
    assert encode(lr_space, {"lr": 1e-5})[0] == pytest.approx(0.0, abs=1e-12)
    assert encode(lr_space, {"lr": 1.0})[0] == pytest.approx(1.0, abs=1e-12)


def test_encode_categorical_bin_midpoint():
    sp = SearchSpace((ParamSpec("c", "categorical", choices=("w", "x", "y", "z")),))
    assert encode(sp, {"c": "y"})[0] == pytest.approx(0.625)  # (2 + 0.5) / 4


def test_encode_inactive_sentinel(cond_space):
    x = encode(cond_space, {"n_conv": 1})
    assert x[cond_space.index("f2")] == 1.0


def test_decode_round_trips_active_values():
    sp = build_cnn_space(32, 128)
    rng = spawn_rng(17)
    for _ in range(50):
        cfg = sample(sp, rng)
        again = decode(sp, encode(sp, cfg))
        assert again == cfg


# ---------------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------------


def test_refine_identity_with_full_span(lr_space):
    trials = [trial(1, {"lr": 1e-5}, 0.1), trial(2, {"lr": 1.0}, 0.2)]
    refined = refine(lr_space, trials, q=1.0, margin=0.0)
    assert refined == lr_space


def test_refine_log_bounds_derived_example(lr_space):
    # elites {0.02, 0.05, 0.09} on log10 scale span 0.65321; margin 0.1 widens
    # each side by 0.065321
    trials = [
        trial(1, {"lr": 0.02}, 0.1),
        trial(2, {"lr": 0.05}, 0.2),
        trial(3, {"lr": 0.09}, 0.3),
    ]
    refined = refine(lr_space, trials, q=1.0, margin=0.1)
    p = refined.param("lr")
    lo_expect = 10 ** (math.log10(0.02) - 0.1 * (math.log10(0.09) - math.log10(0.02)))
    hi_expect = 10 ** (math.log10(0.09) + 0.1 * (math.log10(0.09) - math.log10(0.02)))
    assert p.low == pytest.approx(lo_expect, rel=1e-12)
    assert p.high == pytest.approx(hi_expect, rel=1e-12)
    assert p.low == pytest.approx(0.0172, rel=5e-3)
    assert p.high == pytest.approx(0.105, rel=5e-3)


def test_refine_good_band_stays_in_plausible_interval(lr_space):
    rng = spawn_rng(23)
    trials = [
        trial(i, {"lr": float(10 ** rng.uniform(-2, -1))}, float(rng.random()))
        for i in range(1, 31)
    ]
    refined = refine(lr_space, trials, q=0.5, margin=0.1)
    p = refined.param("lr")
    assert 0.005 <= p.low <= 0.02
    assert 0.05 <= p.high <= 0.2


def test_refine_insufficient_elites(lr_space):
    with pytest.raises(InsufficientElitesError):
        refine(lr_space, [trial(1, {"lr": 0.1}, 0.5)], q=0.1, margin=0.0)


def test_refine_categorical_keeps_observed_only():
    sp = SearchSpace((ParamSpec("b", "categorical", choices=(16, 32, 64, 128, 256)),))
    trials = [trial(1, {"b": 32}, 0.1), trial(2, {"b": 128}, 0.2), trial(3, {"b": 256}, 0.9)]
    refined = refine(sp, trials, q=0.67, margin=0.0)
    assert refined.param("b").choices == (32, 128)


def test_refine_categorical_never_observed_keeps_original(cond_space):
    trials = [trial(i, {"n_conv": 1}, 0.1 * i) for i in range(1, 5)]
    refined = refine(cond_space, trials, q=0.5, margin=0.0)
    assert refined.param("f2") == cond_space.param("f2")


def test_refine_resolution_coupled_untouched():
    sp = build_cnn_space(32, 128)
    rng = spawn_rng(31)
    trials = [trial(i, sample(sp, rng), float(rng.random())) for i in range(1, 41)]
    refined = refine(sp, trials, q=0.25, margin=0.1)
    assert refined.param("n_conv") == sp.param("n_conv")


def test_refine_floor_prevents_collapse(lr_space):
    trials = [trial(i, {"lr": 0.01}, 0.1) for i in range(1, 5)]
    refined = refine(lr_space, trials, q=1.0, margin=0.0)
    p = refined.param("lr")
    width = math.log10(p.high) - math.log10(p.low)
    assert width == pytest.approx(0.05 * 5.0, rel=1e-9)


def test_refine_nesting_and_elite_membership():
    sp = build_cnn_space(32, 128)
    rng = spawn_rng(41)
    for round_seed in range(20):
        trials = [
            trial(i, sample(sp, rng), float(rng.random())) for i in range(1, 61)
        ]
        refined = refine(sp, trials, q=0.2, margin=0.1)
        for p in sp.params:
            rp = refined.param(p.name)
            if p.resolution_coupled:
                assert rp == p
            elif p.kind == "categorical":
                assert set(rp.choices) <= set(p.choices)
            else:
                assert rp.low >= p.low - 1e-12 and rp.high <= p.high + 1e-12
        ranked = sorted(trials, key=lambda t: (t.objective, t.trial_id))
        for e in ranked[: int(0.2 * len(trials))]:
            assert not validate(refined, e.config), validate(refined, e.config)


def test_refine_idempotent_on_elites():
    sp = build_cnn_space(32, 128)
    rng = spawn_rng(43)
    trials = [trial(i, sample(sp, rng), float(rng.random())) for i in range(1, 41)]
    once = refine(sp, trials, q=0.3, margin=0.0)
    twice = refine(once, trials, q=0.3, margin=0.0)
    for p1, p2 in zip(once.params, twice.params):
        assert (p1.low, p1.high, p1.choices) == (p2.low, p2.high, p2.choices), p1.name


def test_refine_idempotent_when_floor_hits(lr_space):
    trials = [trial(i, {"lr": 0.01}, 0.1) for i in range(1, 5)]
    once = refine(lr_space, trials, q=1.0, margin=0.0)
    twice = refine(once, trials, q=1.0, margin=0.0)
    assert once.param("lr").low == twice.param("lr").low
    assert once.param("lr").high == twice.param("lr").high


# ---------------------------------------------------------------------------
# max_conv_layers
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("resolution,expected", [(32, 4), (128, 6), (2, 0), (8, 2), (64, 5)])
def test_max_conv_layers_values(resolution, expected):
    assert max_conv_layers(resolution) == expected


def test_max_conv_layers_characterization():
    for r in (2, 4, 8, 16, 32, 64, 128, 256):
        L = max_conv_layers(r)
        assert r / 2**L >= 2 > r / 2 ** (L + 1)


def test_max_conv_layers_rejects_tiny():
    with pytest.raises(ValueError):
        max_conv_layers(1)


# ---------------------------------------------------------------------------
# properties over generated spaces
# ---------------------------------------------------------------------------


def make_random_space(rng) -> SearchSpace:
    """Generator for property tests: numeric/categorical mix with a couple of
    single-parent conditions."""
    n_params = int(rng.integers(1, 7))
    params, conditions = [], []
    parent_candidates = []
    for i in range(n_params):
        kind = ("continuous", "integer", "categorical")[int(rng.integers(0, 3))]
        name = f"p{i}"
        if kind == "categorical":
            k = int(rng.integers(2, 6))
            params.append(ParamSpec(name, kind, choices=tuple(f"c{j}" for j in range(k))))
        elif kind == "integer":
            lo = int(rng.integers(-5, 5))
            hi = lo + int(rng.integers(1, 20))
            use_log = bool(rng.random() < 0.3) and lo > 0
            params.append(
                ParamSpec(name, kind, low=lo, high=hi, scale="log10" if use_log else "linear")
            )
        else:
            lo = float(rng.uniform(-10, 5))
            hi = lo + float(rng.uniform(0.5, 20))
            use_log = bool(rng.random() < 0.3) and lo > 0
            params.append(
                ParamSpec(name, kind, low=lo, high=hi, scale="log10" if use_log else "linear")
            )
        if parent_candidates and rng.random() < 0.4:
            parent_name, parent_spec = parent_candidates[int(rng.integers(0, len(parent_candidates)))]
            if parent_spec.kind == "categorical":
                take = [c for c in parent_spec.choices if rng.random() < 0.5]
                when = When("in", values=tuple(take or parent_spec.choices[:1]))
            else:
                mid = (parent_spec.low + parent_spec.high) / 2
                when = When("ge", value=float(mid))
            conditions.append(Condition(name, parent_name, when))
        else:
            parent_candidates.append((name, params[-1]))
    return SearchSpace(tuple(params), tuple(conditions))


def test_property_sample_validate_round_trip_generated_spaces():
    # the 1000-space gate: every sample from every generated space validates
    master = spawn_rng(2024)
    for _ in range(1000):
        sp = make_random_space(master)
        cfg = sample(sp, master)
        assert not validate(sp, cfg), (sp, cfg)


def test_property_encode_bounds_and_determinism():
    master = spawn_rng(77)
    for _ in range(200):
        sp = make_random_space(master)
        cfg = sample(sp, master)
        x1 = encode(sp, cfg)
        x2 = encode(sp, cfg)
        assert np.array_equal(x1, x2)
        assert np.all(x1 >= -1e-12) and np.all(x1 <= 1.0 + 1e-12)
        for p in sp.params:
            if p.is_numeric and p.name in cfg:
                assert encode(sp, {**cfg, p.name: p.low})[sp.index(p.name)] == pytest.approx(0.0)


def test_property_refined_samples_validate():
    master = spawn_rng(99)
    for _ in range(100):
        sp = make_random_space(master)
        trials = [trial(i, sample(sp, master), float(master.random())) for i in range(1, 21)]
        refined = refine(sp, trials, q=0.5, margin=0.2)
        for _ in range(5):
            cfg = sample(refined, master)
            assert not validate(refined, cfg)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_space_json_round_trip(tmp_path):
    sp = build_cnn_space(32, 128)
    path = tmp_path / "space.json"
    sp.save(path)
    assert SearchSpace.load(path) == sp


def test_refined_space_round_trips_min_span(tmp_path, lr_space):
    trials = [trial(i, {"lr": 0.01}, 0.1) for i in range(1, 5)]
    refined = refine(lr_space, trials, q=1.0, margin=0.0)
    path = tmp_path / "refined.json"
    refined.save(path)
    loaded = SearchSpace.load(path)
    assert loaded == refined
    assert loaded.param("lr").min_span == refined.param("lr").min_span


def test_with_resolution_recomputes_coupled_bounds():
    sp = build_cnn_space(32, 128)
    up = sp.with_resolution(128)
    assert up.param("n_conv").high == 6
    assert up.param("n_fc") == sp.param("n_fc")
