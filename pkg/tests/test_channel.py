import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import TINY_GAINS, TINY_TUPLES, crandn, grid_path
from momp.channel import (
    ArrayGeometry,
    FrameSeparableTensor,
    TrainingSet,
    build_dictionaries,
    build_measurement_tensor,
    build_pilot,
    build_training_dft,
    channel_taps,
    extract_paths,
    measure,
    reconstruct_taps,
    steering,
    synthesize_measurements,
    time_response,
    whiten,
    whiten_frames,
)
from momp.errors import ConfigError, DecompositionError, DimensionError, DomainError, ResourceError
from momp.metrics import nmse_db
from momp.paths import PathParams
from momp.solver import SolverConfig, SparseProblem, SparseSolution, momp_solve
from momp.tensor import contract_full, contraction_energy, kron_flatten

TX, RX = ArrayGeometry(2, 2, 1), ArrayGeometry(4, 4, -1)
TS = 1e-9


@pytest.fixture(scope="module")
def tiny():
    training = build_training_dft(TX, RX, 4, 12, 8, sampling_time=TS)
    dicts = build_dictionaries(4, TX, RX, 8, TS)
    return training, dicts


def unit(rng, n=3):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


class TestArrayGeometry:
    def test_element_positions(self):
        pos = ArrayGeometry(2, 3).element_positions(0.01)
        np.testing.assert_allclose(pos[4], [0.005, 0.005, 0.0])
        assert pos.shape == (6, 3)

    @pytest.mark.parametrize("args", [(0, 2), (2, 2, 0)])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            ArrayGeometry(*args)


class TestSteering:
    def test_broadside_is_all_ones(self):
        np.testing.assert_allclose(steering(ArrayGeometry(3, 2), (0, 0, 1)), np.ones(6))

    def test_two_element_endfire(self):
        np.testing.assert_allclose(steering(ArrayGeometry(2, 1), (1, 0, 0)), [1, -1], atol=1e-15)

    def test_per_element_phase(self, rng):
        d = unit(rng)
        arr = ArrayGeometry(3, 2)
        a = steering(arr, d)
        for ia, ib in itertools.product(range(3), range(2)):
            assert a[ia * 2 + ib] == pytest.approx(np.exp(-1j * np.pi * (ia * d[0] + ib * d[1])))

    def test_matches_element_positions(self, rng):
        d = unit(rng)
        arr = ArrayGeometry(3, 4)
        lam = 0.005
        ref = np.exp(-2j * np.pi / lam * arr.element_positions(lam) @ d)
        np.testing.assert_allclose(steering(arr, d), ref, atol=1e-12)

    def test_non_unit_direction(self):
        with pytest.raises(DomainError):
            steering(ArrayGeometry(2, 2), (1, 1, 0))


class TestTimeResponse:
    def test_zero_delay(self):
        np.testing.assert_allclose(time_response(0.0, 4, TS), [1, 0, 0, 0], atol=1e-16)

    def test_one_sample(self):
        np.testing.assert_allclose(time_response(TS, 4, TS), [0, 1, 0, 0], atol=1e-16)

    def test_half_sample(self):
        r = time_response(0.5 * TS, 5, TS)
        for d in range(1, 6):
            x = d - 1 - 0.5
            assert r[d - 1].real == pytest.approx(math.sin(math.pi * x) / (math.pi * x), rel=1e-13)
        assert np.all(r.imag == 0)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            time_response(0.0, 0, TS)


class TestChannelTaps:
    def test_single_on_sample_path(self, rng):
        p = PathParams(1.0, unit(rng), unit(rng), 5e-9 + 2 * TS)
        h = channel_taps([p], TX, RX, 4, TS, 5e-9)
        outer = np.outer(steering(RX, p.doa), steering(TX, p.dod).conj())
        np.testing.assert_allclose(h[2], outer, atol=1e-12)
        for d in (0, 1, 3):
            assert np.abs(h[d]).max() < 1e-12

    def test_superposition(self, rng):
        p1 = PathParams(0.3j, unit(rng), unit(rng), 1.3 * TS)
        p2 = PathParams(-1.1, unit(rng), unit(rng), 2.7 * TS)
        both = channel_taps([p1, p2], TX, RX, 6, TS, 0.0)
        sep = channel_taps([p1], TX, RX, 6, TS, 0.0) + channel_taps([p2], TX, RX, 6, TS, 0.0)
        np.testing.assert_allclose(both, sep, atol=1e-14)

    def test_scalar_oracle(self, rng):
        paths = [PathParams(complex(*rng.standard_normal(2)), unit(rng), unit(rng), rng.uniform(0, 5) * TS)
                 for _ in range(3)]
        h = channel_taps(paths, TX, RX, 6, TS, 0.0)
        for d, r, c in [(0, 0, 0), (2, 5, 3), (5, 15, 1)]:
            ref = 0
            for p in paths:
                ar = np.exp(-1j * np.pi * ((r // 4) * p.doa[0] + (r % 4) * p.doa[1]))
                at = np.exp(-1j * np.pi * ((c // 2) * p.dod[0] + (c % 2) * p.dod[1]))
                x = d - p.delay / TS
                ref += p.gain * ar * np.conj(at) * (1.0 if x == 0 else math.sin(math.pi * x) / (math.pi * x))
            assert h[d, r, c] == pytest.approx(ref, rel=1e-12)

    def test_empty(self):
        assert not np.any(channel_taps([], TX, RX, 3, TS, 0.0))

    def test_out_of_window_warns(self, rng, caplog):
        channel_taps([PathParams(1, unit(rng), unit(rng), 10 * TS)], TX, RX, 4, TS, 0.0)
        assert "outside" in caplog.text


class TestTraining:
    def test_frame_count(self):
        t = build_training_dft(ArrayGeometry(2, 2), ArrayGeometry(2, 2), 2, 4, 2)
        assert t.n_frames == 8

    def test_unit_modulus(self, tiny):
        training, _ = tiny
        np.testing.assert_allclose(np.abs(training.precoders_rf), 1)
        np.testing.assert_allclose(np.abs(training.combiners_rf), 1)

    def test_full_scale_counts(self):
        t = build_training_dft(ArrayGeometry(4, 4), ArrayGeometry(8, 8), 8, 96, 64)
        assert t.n_frames == 128
        assert len({tuple(np.round(f[:, 0], 9)) for f in t.precoders_rf}) == 16
        assert len({tuple(np.round(w[:, 0], 9)) for w in t.combiners_rf}) == 8

    def test_full_scale_pilot_layout(self):
        s = build_pilot(96, 64)
        assert s.shape == (1, 160)
        assert not np.any(s[0, :64]) and np.all(s[0, 64:128] == 1) and not np.any(s[0, 128:])

    def test_hybrid_pilot(self):
        s = build_pilot(8, 8, rf_chains=2)
        block = s[:, 8:16]
        np.testing.assert_allclose(block @ block.conj().T, 4 * np.eye(2), atol=1e-12)

    def test_bad_chain_count(self):
        with pytest.raises(ConfigError):
            build_training_dft(ArrayGeometry(2, 2), ArrayGeometry(2, 3), 4, 4, 2)
        with pytest.raises(ConfigError):
            build_training_dft(ArrayGeometry(3, 1), ArrayGeometry(2, 2), 2, 4, 2, rf_chains_tx=2)

    def test_non_unit_modulus_rejected(self, tiny):
        training, _ = tiny
        with pytest.raises(ConfigError):
            TrainingSet(training.tx, training.rx, 2 * training.precoders_rf, training.precoders_bb,
                        training.combiners_rf, training.combiners_bb, training.pilot,
                        training.n_symbols, training.taps, training.sampling_time)

    def test_pilot_shape_checked(self, tiny):
        training, _ = tiny
        with pytest.raises(DimensionError):
            TrainingSet(training.tx, training.rx, training.precoders_rf, training.precoders_bb,
                        training.combiners_rf, training.combiners_bb, training.pilot[:, :-1],
                        training.n_symbols, training.taps, training.sampling_time)


class TestSynthesize:
    def test_zero_channel(self, tiny):
        training, _ = tiny
        y = synthesize_measurements(np.zeros((8, 16, 4)), training)
        assert y.shape == (16, 4, 12) and not np.any(y)

    def test_single_tap_all_ones(self, rng):
        t = build_training_dft(TX, RX, 4, 3, 1, tx_power=4.0, pilot=np.ones((1, 4)))
        h = crandn(rng, 1, 16, 4)
        y = synthesize_measurements(h, t)
        for m in range(t.n_frames):
            ref = 2.0 * t.combiners[m].conj().T @ h[0] @ t.precoders[m] @ np.ones((1, 3))
            np.testing.assert_allclose(y[m], ref, atol=1e-12)

    def test_loop_oracle(self, rng):
        tx, rx = ArrayGeometry(2, 1), ArrayGeometry(2, 1)
        q_len, d_len = 3, 2
        t = build_training_dft(tx, rx, 1, q_len, d_len, tx_power=2.0, pilot=crandn(rng, 1, 5))
        h = crandn(rng, d_len, 2, 2)
        y = synthesize_measurements(h, t)
        s = t.pilot
        for m in range(t.n_frames):
            w, f = t.combiners[m], t.precoders[m]
            for q in range(1, q_len + 1):
                ref = sum(w.conj().T @ h[d - 1] @ f @ s[:, q + d_len - d - 1] for d in range(1, d_len + 1))
                np.testing.assert_allclose(y[m][:, q - 1], math.sqrt(2.0) * ref, atol=1e-12)

    def test_noise_reproducible_and_scaled(self):
        t = build_training_dft(ArrayGeometry(1, 1), ArrayGeometry(4, 4), 1, 2000, 1, noise_var=0.5,
                               pilot=np.zeros((1, 2001)))
        y1 = synthesize_measurements(np.zeros((1, 16, 1)), t, noise_seed=7)
        y2 = synthesize_measurements(np.zeros((1, 16, 1)), t, noise_seed=7)
        y3 = synthesize_measurements(np.zeros((1, 16, 1)), t, noise_seed=8)
        assert np.array_equal(y1, y2) and not np.array_equal(y1, y3)
        # each DFT column has norm^2 16, so combined noise power is 16 * sigma^2
        assert np.mean(np.abs(y1) ** 2) == pytest.approx(8.0, rel=0.05)

    def test_frames_use_independent_streams(self):
        t = build_training_dft(ArrayGeometry(2, 1), ArrayGeometry(1, 1), 1, 4, 1, noise_var=1.0)
        y = synthesize_measurements(np.zeros((1, 1, 2)), t, noise_seed=3)
        sub = synthesize_measurements(np.zeros((1, 1, 2)), t.subset([0]), noise_seed=3)
        np.testing.assert_array_equal(y[0], sub[0])
        assert not np.allclose(y[0], y[1])


class TestWhiten:
    def test_orthonormal_unchanged(self, rng):
        w, _ = np.linalg.qr(crandn(rng, 6, 3))
        y = crandn(rng, 3, 4)
        y2, w2 = whiten(y, w)
        np.testing.assert_allclose(np.abs(y2), np.abs(y), atol=1e-12)
        np.testing.assert_allclose(w2.conj().T @ w2, np.eye(3), atol=1e-12)

    def test_scaled_identity(self, rng):
        y = crandn(rng, 3, 4)
        y2, w2 = whiten(y, 2 * np.eye(3))
        np.testing.assert_allclose(y2, y / 2, atol=1e-14)
        np.testing.assert_allclose(w2, np.eye(3), atol=1e-14)

    @given(st.integers(0, 2**32 - 1))
    def test_random_combiner_identities(self, seed):
        rng = np.random.default_rng(seed)
        w, h, f = crandn(rng, 6, 3), crandn(rng, 6, 4), crandn(rng, 4, 1)
        y = w.conj().T @ h @ f
        y2, w2 = whiten(y, w)
        np.testing.assert_allclose(w2.conj().T @ w2, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(w2.conj().T @ h @ f, y2, atol=1e-10 * np.abs(y2).max())
        chol = np.linalg.cholesky(w.conj().T @ w)
        linv = np.linalg.inv(chol)
        np.testing.assert_allclose(linv @ w.conj().T @ w @ linv.conj().T, np.eye(3), atol=1e-10)

    def test_rank_deficient(self, rng):
        c = crandn(rng, 4, 1)
        with pytest.raises(DecompositionError):
            whiten(crandn(rng, 2, 3), np.column_stack([c, c]))


class TestDictionaries:
    def test_critical_sampling_is_dft_like(self):
        d = build_dictionaries(1, ArrayGeometry(2, 2), ArrayGeometry(4, 2), 4, TS)
        psi = d[0]
        assert psi.shape == (4, 4)
        np.testing.assert_allclose(psi.conj().T @ psi, 4 * np.eye(4), atol=1e-12)

    def test_atom_counts_and_grids(self, tiny):
        _, d = tiny
        assert d.atom_counts == (16, 16, 8, 8, 32)
        assert d.grids[0][0] == -1 and d.grids[0][-1] < 1
        assert d.grids[4][0] == 0 and d.grids[4][-1] < 8 * TS

    def test_angular_norms(self, tiny):
        _, d = tiny
        for k in range(4):
            np.testing.assert_allclose(np.linalg.norm(d[k], axis=0), math.sqrt(d[k].shape[0]))

    def test_planted_path_is_an_atom(self, tiny, rng):
        _, d = tiny
        p = grid_path(d, (3, 11, 1, 6, 10), 1.0)
        a_r = steering(RX, p.doa)
        cols = np.kron(d[0], d[1])
        corr = np.abs(cols.conj().T @ a_r) / (np.linalg.norm(cols, axis=0) * np.linalg.norm(a_r))
        assert corr.max() == pytest.approx(1.0, abs=1e-12)
        assert int(np.argmax(corr)) == 3 * 16 + 11

    def test_k_res_below_one(self):
        with pytest.raises(ConfigError):
            build_dictionaries(0.5, TX, RX, 4, TS)

    def test_matches_flattened_time_domain_dictionary(self):
        """Block-by-delay dictionary [(conj(A_T) kron A_R) kron p_d^T]_d equals the
        five-dictionary Kronecker product after reordering rows and columns."""
        d = build_dictionaries(2, ArrayGeometry(2, 1), ArrayGeometry(2, 2), 3, TS)
        a_r = np.kron(d[0], d[1])
        a_t_conj = np.kron(d[2], d[3])
        n_d, g_c = d[4].shape
        gcs = np.arange(g_c)
        blocks = []
        for tap in range(n_d):
            p_d = np.sinc(tap - gcs * n_d / g_c)
            blocks.append(np.kron(np.kron(a_t_conj, a_r), p_d[None, :]))
        psi_td = np.vstack(blocks)  # rows (d, t, r); columns (gt, gr, n)
        flat = kron_flatten(d)  # rows (r, t, d); columns (gr, gt, n)
        n_r, n_t = a_r.shape[0], a_t_conj.shape[0]
        g_r, g_t = a_r.shape[1], a_t_conj.shape[1]
        rows = np.arange(n_d * n_t * n_r).reshape(n_d, n_t, n_r).transpose(2, 1, 0).ravel()
        cols = np.arange(g_t * g_r * g_c).reshape(g_t, g_r, g_c).transpose(1, 0, 2).ravel()
        np.testing.assert_allclose(psi_td[rows][:, cols], flat, atol=1e-12)


class TestMeasurementTensor:
    def test_degenerate_sizes(self, rng):
        tx, rx = ArrayGeometry(2, 1), ArrayGeometry(1, 2)
        t = build_training_dft(tx, rx, 2, 1, 1, pilot=crandn(rng, 1, 2))
        t = t.subset([1])
        ms = build_measurement_tensor(t, t.combiners)
        full = ms.tensor.to_dense()
        fs = t.precoders[0] @ t.pilot[:, 0]
        assert full.shape == (2, 1, 2, 2, 1, 1)
        for mr, i2, i3 in itertools.product(range(2), range(2), range(2)):
            assert full[mr, 0, i2, i3, 0, 0] == pytest.approx(np.conj(t.combiners[0][i2, mr]) * fs[i3])

    def test_planted_path_reproduces_observation(self, tiny):
        training, d = tiny
        t = TrainingSet(**{**training.__dict__, "tx_power": 0.25})
        j = (3, 11, 1, 6, 10)
        p = grid_path(d, j, 0.7 - 0.2j)
        ms = measure(channel_taps([p], TX, RX, 8, TS, 0.0), t)
        pred = contract_full(ms.tensor, d.atoms(j)) * p.gain * 0.5
        np.testing.assert_allclose(pred, ms.observation[:, 0], atol=1e-9 * np.abs(pred).max())

    def test_zero_pilot_rows(self, tiny):
        training, _ = tiny
        ms = build_measurement_tensor(training, training.combiners)
        dense = ms.tensor.to_dense().reshape(training.n_frames, 4, 12, -1)
        # output q = 0 only sees pilot columns 0..D-1: all padding
        assert not np.any(dense[:, :, 0])
        assert np.any(dense[:, :, 1])

    def test_row_ordering(self, tiny, rng):
        training, _ = tiny
        y = crandn(rng, training.n_frames, 4, 12)
        ms = build_measurement_tensor(training, training.combiners, y)
        m, mr, q = 5, 2, 7
        assert ms.observation[m * 4 * 12 + mr * 12 + q, 0] == y[m, mr, q]

    def test_dense_cap(self, tiny):
        training, _ = tiny
        with pytest.raises(ResourceError):
            build_measurement_tensor(training, training.combiners).tensor.to_dense(max_entries=10)

    def test_shape_checks(self, tiny):
        training, _ = tiny
        with pytest.raises(DimensionError):
            build_measurement_tensor(training, training.combiners[:, :, :2])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.sets(st.integers(1, 5), max_size=4))
    def test_lazy_matches_dense(self, seed, axis, fixed_axes):
        rng = np.random.default_rng(seed)
        tx, rx = ArrayGeometry(2, 1), ArrayGeometry(2, 2)
        t = build_training_dft(tx, rx, 2, 3, 2, pilot=crandn(rng, 1, 5))
        w = crandn(rng, t.n_frames, 4, 2)
        lazy = build_measurement_tensor(t, w).tensor
        dense = lazy.to_dense()
        vecs = {a: crandn(rng, dense.shape[a]) for a in range(1, 6)}
        fixed = {a: vecs[a] for a in fixed_axes - {axis}}
        atoms = crandn(rng, dense.shape[axis], 3)
        np.testing.assert_allclose(
            contraction_energy(lazy, axis, atoms, fixed), contraction_energy(dense, axis, atoms, fixed),
            rtol=1e-10,
        )
        v = [vecs[a] for a in range(1, 6)]
        np.testing.assert_allclose(contract_full(lazy, v), contract_full(dense, v), atol=1e-12)
        r = crandn(rng, dense.shape[0], 2)
        np.testing.assert_allclose(
            lazy.project(r), (r.conj().T @ dense.reshape(dense.shape[0], -1)).reshape((2,) + dense.shape[1:]),
            atol=1e-12,
        )

    def test_factor_mismatch(self, rng):
        with pytest.raises(DimensionError):
            FrameSeparableTensor(crandn(rng, 2, 4, 1), crandn(rng, 3, 2, 1, 1), RX, ArrayGeometry(2, 1))


class TestExtraction:
    def _solution(self, support, coefs):
        c = np.array(coefs, dtype=complex)[:, None]
        return SparseSolution(list(support), c, [1.0], np.zeros((1, 1)), np.zeros((1, len(support))))

    def test_broadside(self, tiny):
        _, d = tiny
        est = extract_paths(self._solution([(8, 8, 4, 4, 0)], [1.0]), d, TX, RX)
        np.testing.assert_allclose(est[0].doa, [0, 0, -1])
        np.testing.assert_allclose(est[0].dod, [0, 0, 1])

    def test_sorted_by_magnitude(self, tiny):
        _, d = tiny
        est = extract_paths(self._solution([(8, 8, 4, 4, 0), (3, 11, 1, 6, 10)], [0.1, 2j]), d, TX, RX)
        assert [abs(p.gain) for p in est] == [2.0, 0.1]
        assert est[0].relative_delay == d.grids[4][10]

    def test_invisible_grid_point_flagged(self, tiny):
        _, d = tiny
        est = extract_paths(self._solution([(0, 0, 4, 4, 0)], [1.0]), d, TX, RX)
        assert not est[0].valid
        assert np.linalg.norm(est[0].doa) == pytest.approx(1.0)

    def test_needs_grids(self, tiny):
        _, d = tiny
        from momp.solver import DictionarySet

        with pytest.raises(DimensionError):
            extract_paths(self._solution([(0,)], [1.0]), DictionarySet((d[0],)), TX, RX)


class TestEndToEnd:
    def _run(self, tiny, n_paths, sparsity, **kw):
        training, d = tiny
        paths = [grid_path(d, j, g) for j, g in zip(TINY_TUPLES[:n_paths], TINY_GAINS)]
        h = channel_taps(paths, TX, RX, 8, TS, 0.0)
        ms = measure(h, training)
        sol = momp_solve(SparseProblem(ms.observation, ms.tensor, d), SolverConfig(sparsity=sparsity, **kw))
        return paths, h, ms, sol

    @pytest.mark.parametrize("n_paths", [1, 2, 3])
    def test_noiseless_recovery(self, tiny, n_paths):
        paths, h, ms, sol = self._run(tiny, n_paths, n_paths)
        assert sorted(sol.support) == sorted(TINY_TUPLES[:n_paths])
        assert sol.residual_norm <= 1e-7 * np.linalg.norm(ms.observation)
        est = extract_paths(sol, tiny[1], TX, RX)
        for p, e in zip(paths, est):
            np.testing.assert_allclose(e.doa, p.doa, atol=1e-12)
            np.testing.assert_allclose(e.dod, p.dod, atol=1e-12)
            assert e.gain == pytest.approx(p.gain, abs=1e-9)

    def test_nmse_decreases_with_sparsity(self, tiny):
        values = []
        for n_p in (1, 2, 3):
            _, h, _, sol = self._run(tiny, 3, n_p)
            values.append(nmse_db(h, reconstruct_taps(sol, tiny[1])))
        assert values[0] > values[1] > values[2]
        assert values[2] <= -60

    def test_whitening_preserves_support(self, tiny, rng):
        training, d = tiny
        # non-orthogonal combiners make whitening non-trivial
        bb = np.eye(4) + 0.3 * crandn(rng, 4, 4)
        t = TrainingSet(**{**training.__dict__, "combiners_bb": np.broadcast_to(bb, training.combiners_bb.shape).copy()})
        paths = [grid_path(d, j, g) for j, g in zip(TINY_TUPLES, TINY_GAINS)]
        y = synthesize_measurements(channel_taps(paths, TX, RX, 8, TS, 0.0), t)
        cfg = SolverConfig(sparsity=3)
        raw = build_measurement_tensor(t, t.combiners, y)
        yw, ww = whiten_frames(y, t)
        white = build_measurement_tensor(t, ww, yw)
        a = momp_solve(SparseProblem(raw.observation, raw.tensor, d), cfg)
        b = momp_solve(SparseProblem(white.observation, white.tensor, d), cfg)
        assert sorted(a.support) == sorted(b.support) == sorted(TINY_TUPLES)
