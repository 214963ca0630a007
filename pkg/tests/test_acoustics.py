import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anc_lab.acoustics import (
    ConvolverState,
    DivergenceError,
    FirResponse,
    PathFileError,
    PathSet,
    PlantState,
    convolve_step,
    crosstalk_interference,
    interference_now,
    load_paths,
    make_estimates,
    plant_step,
    save_paths,
    synth_paths,
)


def stream(path, xs):
    state = ConvolverState(len(path))
    return np.array([convolve_step(state, path, x) for x in xs])


def direct_convolution(taps, xs):
    # brute force: y[n] = sum_j taps[j] * x[n - j]
    out = np.zeros(len(xs))
    for n in range(len(xs)):
        for j in range(len(taps)):
            if n - j >= 0:
                out[n] += taps[j] * xs[n - j]
    return out


def run_plant(paths, X, Y):
    state = PlantState(paths)
    d = np.zeros_like(X)
    e = np.zeros_like(X)
    for n in range(X.shape[1]):
        d[:, n], e[:, n] = plant_step(paths, X[:, n], Y[:, n], state)
    return d, e


def test_identity_path():
    xs = [0.3, -1.0, 2.5, 7.0]
    np.testing.assert_array_equal(stream(FirResponse([1.0]), xs), xs)


def test_unit_delay():
    np.testing.assert_array_equal(stream(FirResponse([0.0, 1.0]), [1.0, 2.0, 3.0]), [0.0, 1.0, 2.0])


def test_random_path_matches_direct(rng):
    taps = rng.standard_normal(8)
    xs = rng.standard_normal(16)
    np.testing.assert_allclose(stream(FirResponse(taps), xs), direct_convolution(taps, xs), atol=1e-12, rtol=0)


def test_reset_clears_history():
    state = ConvolverState(3)
    for x in (1.0, 2.0, 3.0):
        state.push(x)
    state.reset()
    assert np.all(state.buf == 0)
    assert convolve_step(state, FirResponse([1.0, 1.0, 1.0]), 5.0) == 5.0


def test_fir_validation():
    with pytest.raises(ValueError):
        FirResponse([])
    with pytest.raises(ValueError):
        FirResponse([1.0, np.inf])


def test_zero_control_gives_disturbance(rng):
    paths = synth_paths(3, 16, 8, coupling_gain=0.5, seed=1)
    X = rng.standard_normal((3, 50))
    d, e = run_plant(paths, X, np.zeros_like(X))
    np.testing.assert_array_equal(d, e)


def test_perfect_cancellation_single_node(rng):
    paths = PathSet([FirResponse([0.0, 0.7, -0.2])], [[FirResponse([1.0])]])
    X = rng.standard_normal((1, 40))
    d, _ = run_plant(paths, X, np.zeros_like(X))
    _, e = run_plant(paths, X, d)
    np.testing.assert_array_equal(e, np.zeros_like(e))


def two_node_hand_plant():
    s = [[FirResponse([1.0]), FirResponse([0.5])], [FirResponse([0.5]), FirResponse([1.0])]]
    return PathSet([FirResponse([0.0]), FirResponse([0.0])], s)


def test_two_node_hand_example():
    paths = two_node_hand_plant()
    state = PlantState(paths)
    d, e = plant_step(paths, [0.0, 0.0], [1.0, 1.0], state)
    np.testing.assert_array_equal(d, [0.0, 0.0])
    np.testing.assert_array_equal(e, [-1.5, -1.5])
    assert interference_now(paths, state, 0) == 0.5
    assert crosstalk_interference(paths, np.array([[1.0], [1.0]]), 0) == 0.5


def test_crosstalk_is_zero_without_coupling(rng):
    single = synth_paths(1, 8, 8, seed=0)
    assert crosstalk_interference(single, rng.standard_normal((1, 20)), 0) == 0.0
    decoupled = synth_paths(3, 8, 8, coupling_gain=0.0, seed=0)
    hist = rng.standard_normal((3, 20))
    assert all(crosstalk_interference(decoupled, hist, k) == 0.0 for k in range(3))


def test_crosstalk_matches_plant_residual(rng):
    paths = synth_paths(3, 8, 6, delay_range=(0, 2), coupling_gain=0.7, seed=4)
    Y = rng.standard_normal((3, 30))
    state = PlantState(paths)
    for n in range(30):
        _, e = plant_step(paths, np.zeros(3), Y[:, n], state)
        for k in range(3):
            gamma = crosstalk_interference(paths, Y[:, : n + 1], k)
            assert gamma == pytest.approx(interference_now(paths, state, k), abs=1e-12)
            own = direct_convolution(paths.secondary[k][k].taps, Y[k, : n + 1])[-1]
            assert -e[k] == pytest.approx(own + gamma, abs=1e-12)


def test_non_finite_control_raises():
    paths = two_node_hand_plant()
    with pytest.raises(DivergenceError):
        plant_step(paths, [0.0, 0.0], [np.nan, 0.0], PlantState(paths))


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_superposition(seed):
    rng = np.random.default_rng(seed)
    paths = synth_paths(2, 12, 10, delay_range=(0, 3), coupling_gain=0.6, seed=seed % 1000)
    X = rng.standard_normal((2, 60))
    Y1 = rng.standard_normal((2, 60))
    Y2 = rng.standard_normal((2, 60))
    d, e1 = run_plant(paths, X, Y1)
    _, e2 = run_plant(paths, X, Y2)
    _, e12 = run_plant(paths, X, Y1 + Y2)
    np.testing.assert_allclose(e12 - d, (e1 - d) + (e2 - d), atol=1e-10, rtol=0)


def test_streaming_equals_batch(rng):
    for case in range(10):
        k = 1 + case % 3
        lp, ls = rng.integers(1, 65, size=2)
        paths = PathSet(
            [FirResponse(rng.standard_normal(lp)) for _ in range(k)],
            [[FirResponse(rng.standard_normal(ls)) for _ in range(k)] for _ in range(k)],
        )
        n = int(rng.integers(1, 1025))
        X = rng.standard_normal((k, n))
        Y = rng.standard_normal((k, n))
        d, e = run_plant(paths, X, Y)
        for i in range(k):
            d_ref = np.convolve(paths.primary[i].taps, X[i])[:n]
            e_ref = d_ref - sum(np.convolve(paths.secondary[i][m].taps, Y[m])[:n] for m in range(k))
            np.testing.assert_allclose(d[i], d_ref, atol=1e-12, rtol=0)
            np.testing.assert_allclose(e[i], e_ref, atol=1e-12, rtol=0)


def test_synth_structure():
    paths = synth_paths(3, 64, 32, delay_range=(2, 5), coupling_gain=0.4, seed=7, primary_delay_range=(10, 20))
    for k in range(3):
        assert paths.primary[k].energy == pytest.approx(1.0)
        assert 10 <= np.flatnonzero(paths.primary[k].taps)[0] <= 20
        for m in range(3):
            s = paths.secondary[k][m]
            assert len(s) == 32
            assert 2 <= np.flatnonzero(s.taps)[0] <= 5
            assert s.energy == pytest.approx(1.0 if k == m else 0.16)


def test_synth_coupling_extremes():
    zero = synth_paths(3, 16, 16, coupling_gain=0.0, seed=1)
    assert all(not np.any(zero.secondary[k][m].taps) for k in range(3) for m in range(3) if k != m)
    one = synth_paths(3, 16, 16, coupling_gain=1.0, seed=1)
    energies = [one.secondary[k][m].energy for k in range(3) for m in range(3)]
    np.testing.assert_allclose(energies, 1.0)


def test_synth_determinism():
    assert synth_paths(2, 32, 16, seed=3, coupling_gain=0.5) == synth_paths(2, 32, 16, seed=3, coupling_gain=0.5)
    assert synth_paths(2, 32, 16, seed=3) != synth_paths(2, 32, 16, seed=4)


def test_synth_rejects_bad_arguments():
    with pytest.raises(ValueError):
        synth_paths(2, 16, 16, coupling_gain=-0.1)
    with pytest.raises(ValueError):
        synth_paths(2, 16, 4, delay_range=(0, 4))


def test_estimate_identity():
    paths = synth_paths(2, 32, 32, seed=2)
    est = make_estimates(paths, 32)
    for k in range(2):
        np.testing.assert_array_equal(est.estimates[k].taps, paths.secondary[k][k].taps)


def test_estimate_truncation():
    paths = synth_paths(2, 512, 512, seed=2)
    est = make_estimates(paths, 256)
    for k in range(2):
        assert len(est.estimates[k]) == 256
        np.testing.assert_array_equal(est.estimates[k].taps, paths.secondary[k][k].taps[:256])


def test_estimate_mismatch_energy():
    paths = synth_paths(4, 64, 128, seed=2)
    est = make_estimates(paths, 128, mismatch_noise=0.1, seed=9)
    for k in range(4):
        true = paths.secondary[k][k].taps
        ratio = np.sum((est.estimates[k].taps - true) ** 2) / np.sum(true**2)
        assert 0.08 <= ratio <= 0.12


def test_full_matrix_estimates():
    paths = synth_paths(3, 16, 16, coupling_gain=0.5, seed=2)
    est = make_estimates(paths, 8, full_matrix=True)
    for k in range(3):
        for m in range(3):
            np.testing.assert_array_equal(est.estimate_matrix[k][m].taps, paths.secondary[k][m].taps[:8])
    # without the full matrix, cross models are zero
    plain = make_estimates(paths, 8).full_estimates()
    assert not np.any(plain[0][1].taps)


def test_path_file_round_trip(tmp_path):
    paths = make_estimates(synth_paths(3, 40, 24, coupling_gain=0.3, seed=5), 12, 0.05, seed=1)
    save_paths(paths, tmp_path / "p.txt")
    assert load_paths(tmp_path / "p.txt") == paths
    full = make_estimates(paths, 12, full_matrix=True)
    save_paths(full, tmp_path / "f.txt")
    assert load_paths(tmp_path / "f.txt") == full


def test_path_file_node_count_mismatch(tmp_path):
    save_paths(synth_paths(2, 8, 8, seed=0), tmp_path / "p.txt")
    with pytest.raises(PathFileError, match="K"):
        load_paths(tmp_path / "p.txt", n_nodes=3)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda t: t.replace("S 1 2 :", "S 1 9 :"),
        lambda t: "\n".join(l for l in t.splitlines() if not l.startswith("P 2")),
        lambda t: t + "P 1 : 1.0\n",
        lambda t: t.replace("primary_len 8", "primary_len 9"),
    ],
)
def test_path_file_malformed(tmp_path, mutate):
    save_paths(synth_paths(2, 8, 8, seed=0), tmp_path / "p.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text(mutate((tmp_path / "p.txt").read_text()))
    with pytest.raises(PathFileError):
        load_paths(bad)


def test_identity_plant_file(tmp_path):
    path = tmp_path / "id.txt"
    path.write_text("K 1\nfs 16000\nprimary_len 1\nsecondary_len 1\nestimate_len 1\nP 1 : 1.0\nS 1 1 : 1.0\nShat 1 : 1.0\n")
    paths = load_paths(path)
    assert paths.n_nodes == 1
    state = PlantState(paths)
    d, e = plant_step(paths, [0.4], [0.0], state)
    assert (d[0], e[0]) == (0.4, 0.4)
    d, e = plant_step(paths, [0.7], [0.7], state)
    assert (d[0], e[0]) == (0.7, 0.0)
