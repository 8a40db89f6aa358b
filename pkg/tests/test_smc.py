import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from models_for_tests import ShiftedLG, WindowLG
from pmmh import (
    DegeneracyError,
    Key,
    LgParams,
    SvParams,
    bootstrap_filter,
    ess,
    kalman_loglik,
    normalize_log_weights,
    resample,
    sample_trajectory,
    simulate,
)
from pmmh.rng import Stream
from pmmh.smc import SCHEMES, FilterOutput, ParticleSystem, lineage_indices

Z99 = 2.5758293035489


# --- normalize_log_weights ---------------------------------------------------

def test_normalize_uniform():
    w, lm = normalize_log_weights([0, 0, 0, 0])
    assert np.allclose(w, 0.25) and lm == 0.0


def test_normalize_constant():
    w, lm = normalize_log_weights([np.log(2), np.log(2)])
    assert np.allclose(w, 0.5)
    assert lm == pytest.approx(np.log(2), abs=1e-15)


def test_normalize_shift():
    w1, lm1 = normalize_log_weights([-1000.0] * 3)
    w0, lm0 = normalize_log_weights([0.0] * 3)
    assert np.array_equal(w1, w0)
    assert lm1 - lm0 == -1000.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30), st.floats(-500, 500))
def test_normalize_shift_property(logw, c):
    w, lm = normalize_log_weights(logw)
    w2, lm2 = normalize_log_weights(np.array(logw) + c)
    assert np.allclose(w, w2, rtol=1e-9, atol=1e-15)
    assert lm2 - lm == pytest.approx(c, abs=1e-9)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    ref = np.log(np.mean(np.exp(np.array(logw, dtype=float))))
    assert lm == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("bad", [[-np.inf, -np.inf], [0.0, np.nan], [np.inf, 0.0]])
def test_normalize_degenerate(bad):
    with pytest.raises(DegeneracyError, match="step 4") as exc:
        normalize_log_weights(bad, step=4)
    assert exc.value.step == 4


def test_normalize_partial_minus_inf_is_fine():
    w, lm = normalize_log_weights([-np.inf, 0.0])
    assert list(w) == [0.0, 1.0] and lm == pytest.approx(np.log(0.5))


# --- resampling --------------------------------------------------------------

@pytest.mark.parametrize("scheme", SCHEMES)
def test_resample_degenerate_mass(scheme):
    assert list(resample([1.0, 0.0, 0.0], scheme, Stream(Key(1)))) == [0, 0, 0]


def test_residual_integer_counts():
    assert list(resample([0.25] * 4, "residual", Stream(Key(2)))) == [0, 1, 2, 3]


def _count_matrix(w, scheme, reps, seed, n=None):
    n = len(w) if n is None else n
    key = Key(seed)
    counts = np.zeros((reps, len(w)))
    for r in range(reps):
        idx = resample(w, scheme, Stream(key, run=r), n=n)
        counts[r] = np.bincount(idx, minlength=len(w))
    return counts


def test_multinomial_mean_counts():
    w = np.array([0.7, 0.2, 0.1])
    counts = _count_matrix(w, "multinomial", 10_000, 3, n=100)
    se = np.sqrt(100 * w * (1 - w) / 10_000)
    assert np.all(np.abs(counts.mean(0) - 100 * w) < 4 * se)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_resample_unbiased(scheme):
    w = np.array([0.05, 0.4, 0.15, 0.3, 0.1])
    counts = _count_matrix(w, scheme, 10_000, 4)
    se = counts.std(0, ddof=1) / np.sqrt(counts.shape[0])
    se = np.maximum(se, 1e-12)
    assert np.all(np.abs(counts.mean(0) - 5 * w) <= 4 * se + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40).filter(lambda v: sum(v) > 0),
       st.integers(0, 2**32))
def test_floor_guarantees(raw, seed):
    w = np.array(raw) / np.sum(raw)
    w = w / w.sum()
    n = len(w)
    sysc = np.bincount(resample(w, "systematic", Stream(Key(seed))), minlength=n)
    resc = np.bincount(resample(w, "residual", Stream(Key(seed))), minlength=n)
    lo = np.floor(n * w)
    assert np.all(sysc >= np.floor(n * w * (1 - 1e-12))) and np.all(sysc <= np.ceil(n * w * (1 + 1e-12)))
    assert np.all(resc >= lo - 1e-12)
    assert sysc.sum() == n and resc.sum() == n
    assert np.all(sysc[w == 0] == 0) and np.all(resc[w == 0] == 0)


@pytest.mark.parametrize("bad", [[0.5, 0.6], [1.2, -0.2], [np.nan, 1.0]])
def test_resample_rejects_bad_weights(bad):
    with pytest.raises(ValueError):
        resample(bad, "multinomial", Stream(Key(0)))


def test_resample_rejects_unknown_scheme():
    with pytest.raises(ValueError, match="scheme"):
        resample([1.0], "stratified", Stream(Key(0)))


# --- ess -----------------------------------------------------------------------

def test_ess_examples():
    assert ess([0.25] * 4) == pytest.approx(4.0)
    assert ess([0.0, 1.0, 0.0]) == 1.0
    assert ess([0.5, 0.25, 0.25]) == pytest.approx(2.666667, abs=1e-6)
    with pytest.raises(ValueError):
        ess([0.5, 0.6])


# --- filter ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def lg_data():
    p = LgParams(0.8, 1.0, 0.5)
    return p, simulate("lg", p, 50, 2024)[1]


def test_filter_output_shapes_and_sum(lg_data):
    p, y = lg_data
    out = bootstrap_filter("lg", p, y, 64, "systematic", 1)
    assert out.system.states.shape == (50, 64)
    assert out.system.log_weights.shape == (50, 64)
    assert np.array_equal(out.system.ancestors[0], np.arange(64))
    assert out.system.ancestors.min() >= 0 and out.system.ancestors.max() < 64
    assert out.log_lik_hat == pytest.approx(np.sum(out.per_step_log_z), abs=1e-12)
    assert np.all((out.ess >= 1 - 1e-9) & (out.ess <= 64 + 1e-9))


def test_single_particle_is_plain_path_likelihood(lg_data):
    p, y = lg_data
    out = bootstrap_filter("lg", p, y, 1, "multinomial", 5)
    x = out.system.states[:, 0]
    ref = norm.logpdf(y, loc=x, scale=p.sigma_y).sum()
    assert out.log_lik_hat == pytest.approx(ref, abs=1e-10)
    path = sample_trajectory(out, Stream(Key(0)))
    assert np.array_equal(path, x)


def test_single_particle_path_follows_prior_dynamics():
    # with N=1 the path is a prior draw: check the AR(1) lag-1 regression
    y = np.zeros(5000)
    out = bootstrap_filter("lg", LgParams(0.6, 1.0, 1.0), y, 1, "systematic", 9)
    x = out.system.states[:, 0]
    slope = np.dot(x[:-1], x[1:]) / np.dot(x[:-1], x[:-1])
    assert abs(slope - 0.6) < 4 * np.sqrt((1 - 0.36) / 5000)


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("N, T", [(8, 10), (64, 50)])
def test_unbiased_against_kalman(scheme, N, T):
    # N=8 pairs with T=10: at T=50 its ratio is too heavy-tailed for a CLT interval
    p = LgParams(0.8, 1.0, 0.5)
    y = simulate("lg", p, T, 2024)[1]
    exact = kalman_loglik(p, y)
    reps = 2000
    key = Key(1000 + N).child(SCHEMES.index(scheme))
    r = np.array([np.exp(bootstrap_filter("lg", p, y, N, scheme, key, run=i).log_lik_hat - exact)
                  for i in range(reps)])
    half = Z99 * r.std(ddof=1) / np.sqrt(reps)
    assert abs(r.mean() - 1) <= half, (r.mean(), half)


def test_adaptive_resampling_stays_unbiased(lg_data):
    p, y = lg_data
    exact = kalman_loglik(p, y)
    key = Key(77)
    outs = [bootstrap_filter("lg", p, y, 32, "systematic", key, run=i, ess_threshold=0.5)
            for i in range(2000)]
    r = np.array([np.exp(o.log_lik_hat - exact) for o in outs])
    assert abs(r.mean() - 1) <= Z99 * r.std(ddof=1) / np.sqrt(r.size)
    assert any(o.resampled.any() for o in outs[:10])
    assert not all(o.resampled[1:].all() for o in outs[:10])


def test_no_resampling_is_importance_sampling():
    p = LgParams(0.8, 1.0, 0.5)
    y = simulate("lg", p, 5, 78)[1]
    exact = kalman_loglik(p, y)
    key = Key(78)
    outs = [bootstrap_filter("lg", p, y, 32, "systematic", key, run=i, ess_threshold=0.0)
            for i in range(2000)]
    assert not any(o.resampled.any() for o in outs)
    assert all(np.array_equal(o.system.ancestors[t], np.arange(32)) for o in outs[:5] for t in range(5))
    r = np.array([np.exp(o.log_lik_hat - exact) for o in outs])
    assert abs(r.mean() - 1) <= Z99 * r.std(ddof=1) / np.sqrt(r.size)
    # carried weights: the total equals the plain average of path likelihoods
    o = outs[0]
    path_ll = norm.logpdf(y[:, None], loc=o.system.states, scale=p.sigma_y).sum(axis=0)
    assert o.log_lik_hat == pytest.approx(np.log(np.mean(np.exp(path_ll))), abs=1e-10)


def test_sv_reference_configuration_variance_drops_with_n():
    _, y = simulate("sv", SvParams(1.0, 0.9, 0.5), 500, 31)
    key = Key(32)
    ll = {N: np.array([bootstrap_filter("sv", SvParams(1.0, 0.9, 0.5), y, N, "systematic",
                                        key.child(N), run=r).log_lik_hat for r in range(20)])
          for N in (100, 200)}
    assert np.all(np.isfinite(ll[100]))
    assert ll[200].var(ddof=1) < ll[100].var(ddof=1)


def test_shift_safety():
    p, y = LgParams(0.8, 1.0, 0.5), simulate("lg", LgParams(0.8, 1.0, 0.5), 30, 3)[1]
    marker = y[12]
    c = 3.75
    base = bootstrap_filter(ShiftedLG(), [*p.__dict__.values(), 0.0, marker], y, 50, "multinomial", 8)
    shifted = bootstrap_filter(ShiftedLG(), [*p.__dict__.values(), c, marker], y, 50, "multinomial", 8)
    assert shifted.log_lik_hat - base.log_lik_hat == pytest.approx(c, abs=1e-9)
    assert np.array_equal(base.system.ancestors, shifted.system.ancestors)


def test_degeneracy_reports_step():
    y = np.zeros(10)
    y[6] = 100.0
    with pytest.raises(DegeneracyError, match="step 6") as exc:
        bootstrap_filter(WindowLG(), LgParams(0.5, 1.0, 3.0), y, 20, "systematic", 0)
    assert exc.value.step == 6


@pytest.mark.parametrize("scheme", SCHEMES)
def test_thread_count_does_not_change_output(lg_data, scheme):
    p, y = lg_data
    a = bootstrap_filter("lg", p, y, 300, scheme, 4, threads=1)
    b = bootstrap_filter("lg", p, y, 300, scheme, 4, threads=8)
    assert a.log_lik_hat == b.log_lik_hat
    for f in ("states", "log_weights", "ancestors"):
        assert np.array_equal(getattr(a.system, f), getattr(b.system, f))


def test_filter_input_errors(lg_data):
    p, y = lg_data
    with pytest.raises(ValueError):
        bootstrap_filter("lg", p, y, 0)
    with pytest.raises(ValueError):
        bootstrap_filter("lg", p, [], 10)
    with pytest.raises(ValueError):
        bootstrap_filter("lg", p, [0.0, np.nan], 10)


# --- lineage -----------------------------------------------------------------------

def test_trajectory_one_hot_final_weights():
    rng = np.random.default_rng(0)
    T, N, j = 6, 5, 3
    states = rng.normal(size=(T, N))
    anc = np.vstack([np.arange(N), rng.integers(0, N, size=(T - 1, N))])
    logw = np.zeros((T, N))
    logw[-1] = -np.inf
    logw[-1, j] = 0.0
    out = FilterOutput(np.zeros(T), 0.0, ParticleSystem(states, logw, anc), np.ones(T), np.ones(T, bool))
    idx = lineage_indices(anc, j)
    expected = states[np.arange(T), idx]
    for seed in range(5):
        assert np.array_equal(sample_trajectory(out, Stream(Key(seed))), expected)
    k = j
    for t in range(T - 1, -1, -1):
        assert idx[t] == k
        k = anc[t, k]


def test_trajectory_genealogy_consistency(lg_data):
    p, y = lg_data
    out = bootstrap_filter("lg", p, y, 40, "residual", 12)
    for seed in range(10):
        path = sample_trajectory(out, Stream(Key(seed)))
        again = sample_trajectory(out, Stream(Key(seed)))
        assert np.array_equal(path, again)
        for t in range(out.T):
            assert path[t] in out.system.states[t]
        # find the terminal particle and check the full lineage
        k = int(np.flatnonzero(out.system.states[-1] == path[-1])[0])
        idx = lineage_indices(out.system.ancestors, k)
        assert np.array_equal(path, out.system.states[np.arange(out.T), idx])
