"""Stepping engines: drift bookkeeping, rank repair, determinism, laws."""
import numpy as np
import pytest
import scipy.stats

from atlaslab import dynamics, model
from atlaslab.errors import InstabilityError
from oracles import KS_CRIT_1PCT, ks_statistic_exponential


def atlas_cfg(**kw):
    return dynamics.StepConfig(**kw)


class TestConfig:
    def test_defaults(self):
        cfg = atlas_cfg()
        assert cfg.dt == 1e-3 and cfg.engine == "exact"

    def test_rejects_bad_values(self):
        for kw in ({"dt": 0.0}, {"scheme": "milstein"},
                   {"resort_strategy": "quick"}, {"engine": "warp"},
                   {"block": 0}):
            with pytest.raises(ValueError):
                atlas_cfg(**kw)


class TestNoiseSource:
    def test_streams_independent_of_consumption_pattern(self):
        # one name's sequence must not depend on how other names are read
        a = dynamics.NoiseSource(42, 3, block=8)
        b = dynamics.NoiseSource(42, 3, block=8)
        seq_a = a.uniforms([1], 20)[0]
        b.uniforms([0], 5)
        b.uniforms([2], 13)
        seq_b = np.concatenate([b.uniforms([1], 7)[0], b.uniforms([1], 13)[0]])
        assert np.array_equal(seq_a, seq_b)

    def test_jump_path_matches_columnwise(self):
        a = dynamics.NoiseSource(7, 4, block=4)
        b = dynamics.NoiseSource(7, 4, block=4)
        names = np.arange(4)
        cols = np.column_stack([a.jump_normals(names) for _ in range(6)])
        assert np.array_equal(cols, b.normals(names, 6))

    def test_replica_streams_differ(self):
        a = dynamics.NoiseSource.for_replica(1, 0, 2)
        b = dynamics.NoiseSource.for_replica(1, 1, 2)
        assert not np.array_equal(a.uniforms([0], 8), b.uniforms([0], 8))

    def test_normals_are_standard(self):
        src = dynamics.NoiseSource(3, 1, block=512)
        x = src.normals([0], 20_000)[0]
        d = scipy.stats.kstest(x, scipy.stats.norm.cdf).statistic
        assert d < KS_CRIT_1PCT / np.sqrt(x.size)


class TestStep:
    def test_single_particle_drift_exact(self):
        st = model.state_from_positions([0.0])
        cfg = atlas_cfg(dt=0.01)
        noise = dynamics.NoiseSource(5, 1)
        out = dynamics.step(st, model.DriftSpec.atlas(), cfg, noise)
        assert out.accumulated_drift[0] == 0.01
        xi = dynamics.NoiseSource(5, 1).normals([0], 1)[0, 0]
        assert out.positions[0] == pytest.approx(0.01 + 0.1 * xi, abs=1e-15)
        assert out.sim_time == 0.01

    def test_driftless_accumulates_nothing(self):
        st = model.sample_spacings_law(2.0, 16, seed=1)
        noise = dynamics.NoiseSource(2, 16)
        out = st
        for _ in range(10):
            out = dynamics.step(out, model.DriftSpec.driftless(), atlas_cfg(dt=0.05), noise)
        assert out.accumulated_drift.sum() == 0.0

    def test_drift_identity_many_steps(self):
        # total accumulated drift equals elapsed time, to summation round-off
        st = model.sample_ppp_half_line(1.0, 1000, seed=9)
        cfg = atlas_cfg(dt=1e-3)
        m = 400
        out, _ = dynamics.run(st, model.DriftSpec.atlas(), cfg, m * cfg.dt,
                              noise=dynamics.NoiseSource(11, 1000))
        total = out.accumulated_drift.sum()
        assert abs(total - m * cfg.dt) <= 10 * np.finfo(float).eps * m

    def test_nan_position_diagnostic(self):
        st = model.state_from_positions([0.0, 1.0])
        st.positions[1] = np.inf
        with pytest.raises(InstabilityError, match=r"particle 1"):
            dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(), 0.01,
                         noise=dynamics.NoiseSource(0, 2))


class TestRun:
    def test_zero_horizon_identity(self):
        st = model.sample_ppp_half_line(1.0, 8, seed=4)
        rec = dynamics.TrajectoryRecorder(sample_times=[0.0])
        out, rec = dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(),
                                st.sim_time, noise=dynamics.NoiseSource(0, 8),
                                recorder=rec)
        assert np.array_equal(out.positions, st.positions)
        assert rec.times == [0.0] and rec.leftmost == [0.0]

    def test_determinism_bit_exact(self):
        st = model.sample_ppp_half_line(2.0, 64, seed=21)
        cfg = atlas_cfg(dt=0.01, block=7)  # odd block to stress batching
        a, _ = dynamics.run(st.copy(), model.DriftSpec.atlas(), cfg, 0.5,
                            noise=dynamics.NoiseSource(77, 64))
        b, _ = dynamics.run(st.copy(), model.DriftSpec.atlas(), cfg, 0.5,
                            noise=dynamics.NoiseSource(77, 64))
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.accumulated_drift, b.accumulated_drift)

    def test_batching_is_invisible(self):
        # block size changes batch shapes but not the trajectory
        st = model.sample_ppp_half_line(2.0, 32, seed=22)
        outs = []
        for block in (3, 16, 512):
            cfg = atlas_cfg(dt=0.01, block=block)
            out, _ = dynamics.run(st.copy(), model.DriftSpec.atlas(), cfg, 0.3,
                                  noise=dynamics.NoiseSource(5, 32))
            outs.append(out.positions)
        assert np.array_equal(outs[0], outs[1])
        assert np.array_equal(outs[0], outs[2])

    def test_recorder_snapping_and_quantiles(self):
        st = model.sample_ppp_half_line(1.0, 100, seed=2)
        rec = dynamics.TrajectoryRecorder(sample_times=[0.0, 0.1004, 0.25],
                                          quantile_fractions=(0.0, 0.5, 1.0))
        out, rec = dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(dt=0.01),
                                0.25, noise=dynamics.NoiseSource(1, 100), recorder=rec)
        assert rec.times == [0.0, 0.1, 0.25]
        for t, y1, qs in zip(rec.times, rec.leftmost, rec.quantiles):
            assert qs[0] == y1  # q=0 is the leftmost
            assert qs[0] <= qs[1] <= qs[2]
        assert out.sim_time == pytest.approx(0.25, abs=1e-12)

    def test_invariants_after_run(self):
        st = model.sample_ppp_half_line(2.0, 50, seed=3)
        out, _ = dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(dt=0.01),
                              1.0, noise=dynamics.NoiseSource(9, 50))
        out.validate()

    def test_rejects_backwards_horizon(self):
        st = model.state_from_positions([0.0])
        st.sim_time = 1.0
        with pytest.raises(ValueError):
            dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(), 0.5,
                         noise=dynamics.NoiseSource(0, 1))


class TestResort:
    def test_already_sorted_identity(self):
        st = model.sample_ppp_half_line(1.0, 10, seed=1)
        out = dynamics.resort(st)
        assert np.array_equal(out.name_at_rank, st.name_at_rank)

    def test_adjacent_inversion(self):
        st = model.state_from_positions([0.0, 1.0, 2.0])
        st.positions[0] = 1.5  # now names (1, 0, 2) by position
        out = dynamics.resort(st)
        out.validate()
        assert out.name_at_rank.tolist() == [1, 0, 2]

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(8)
        st = model.state_from_positions(rng.normal(size=1000))
        st.positions[:] = rng.normal(size=1000)  # scramble behind its back
        a = dynamics.resort(st, "adaptive_insertion")
        b = dynamics.resort(st, "full_sort")
        assert np.array_equal(a.name_at_rank, b.name_at_rank)
        assert np.array_equal(a.rank_of, b.rank_of)

    def test_tie_resolution_matches(self):
        st = model.state_from_positions([0.0, 1.0, 1.0, 0.5])
        st.positions[:] = [1.0, 1.0, 0.0, 1.0]
        a = dynamics.resort(st, "adaptive_insertion")
        b = dynamics.resort(st, "full_sort")
        assert np.array_equal(a.name_at_rank, b.name_at_rank)
        assert a.name_at_rank.tolist() == [2, 0, 1, 3]


class TestOccupation:
    def test_single_particle_gets_everything(self):
        st = model.state_from_positions([0.0])
        rec = dynamics.TrajectoryRecorder(sample_times=[], track_leftmost_names=True)
        _, rec = dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(dt=0.25),
                              2.0, noise=dynamics.NoiseSource(0, 1), recorder=rec)
        occ = dynamics.leftmost_occupation_histogram(rec)
        assert occ.tolist() == [2.0]

    def test_partition_of_time_exact(self):
        # dyadic dt makes every product and the sum exact in binary
        st = model.sample_spacings_law(2.0, 12, seed=5)
        rec = dynamics.TrajectoryRecorder(sample_times=[], track_leftmost_names=True)
        _, rec = dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(dt=0.25),
                              64.0, noise=dynamics.NoiseSource(6, 12), recorder=rec)
        occ = dynamics.leftmost_occupation_histogram(rec)
        assert occ.min() >= 0.0 and occ.size == 12
        assert occ.sum() == 64.0
        assert (occ > 0).sum() >= 2  # the crown changes hands

    def test_missing_history_is_an_error(self):
        rec = dynamics.TrajectoryRecorder(sample_times=[])
        with pytest.raises(ValueError, match="track_leftmost_names"):
            dynamics.leftmost_occupation_histogram(rec)


class TestLaws:
    def test_stationary_spacings_stay_exponential(self):
        # start at the product-Exp(2) gap law, run, test gaps vs Exp(2)
        n, T = 500, 2.0
        st = model.sample_spacings_law(2.0, n, seed=30)
        out, _ = dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(dt=2e-3),
                              T, noise=dynamics.NoiseSource(31, n))
        gaps = model.spacings_of(out).gaps[:100]
        d = ks_statistic_exponential(gaps, rate=2.0)
        assert d < KS_CRIT_1PCT / np.sqrt(gaps.size)

    def test_exchangeability_driftless(self):
        # gamma == 0: renaming particles cannot change the ranked law
        n, R, T = 16, 200, 0.5
        base = model.sample_spacings_law(1.0, n, seed=40).positions
        y_a, y_b = [], []
        for r in range(R):
            for flip, sink in ((False, y_a), (True, y_b)):
                pos = base[::-1].copy() if flip else base.copy()
                st = model.state_from_positions(pos)
                out, _ = dynamics.run(st, model.DriftSpec.driftless(),
                                      atlas_cfg(dt=0.01), T,
                                      noise=dynamics.NoiseSource.for_replica(41, r, n))
                sink.append(out.leftmost())
        d = scipy.stats.ks_2samp(y_a, y_b).statistic
        assert d < KS_CRIT_1PCT * np.sqrt(2.0 / R)

    def test_harris_leftmost_drifts_away(self):
        # no restoring drift: the minimum runs off to -inf; windowed engine
        # is exact here because gamma == 0 removes all interaction
        n, T, reps = 10_000, 100.0, 100
        cfg = atlas_cfg(dt=0.05, engine="windowed", sync_every=25.0)
        negatives = 0
        for r in range(reps):
            st = model.sample_ppp_half_line(1.0, n, seed=(50, r))
            out, _ = dynamics.run(st, model.DriftSpec.driftless(), cfg, T,
                                  noise=dynamics.NoiseSource.for_replica(51, r, n))
            negatives += out.leftmost() < 0.0
        assert negatives >= 95


class TestWindowedEngine:
    def test_matches_exact_engine_in_law(self):
        # same seeds, two engines: compare Y1(T) samples distributionally
        n, T, R = 200, 20.0, 120
        y_exact, y_win = [], []
        for r in range(R):
            st = model.sample_ppp_half_line(2.0, n, seed=(60, r))
            noise = dynamics.NoiseSource.for_replica(61, r, n)
            out, _ = dynamics.run(st.copy(), model.DriftSpec.atlas(),
                                  atlas_cfg(dt=0.05), T, noise=noise)
            y_exact.append(out.leftmost())
            noise2 = dynamics.NoiseSource.for_replica(61, r, n)
            out2, _ = dynamics.run(st.copy(), model.DriftSpec.atlas(),
                                   atlas_cfg(dt=0.05, engine="windowed",
                                             sync_every=5.0), T, noise=noise2)
            y_win.append(out2.leftmost())
        d = scipy.stats.ks_2samp(y_exact, y_win).statistic
        assert d < KS_CRIT_1PCT * np.sqrt(2.0 / R)

    def test_drift_identity_windowed(self):
        st = model.sample_ppp_half_line(1.0, 500, seed=70)
        cfg = atlas_cfg(dt=0.01, engine="windowed", sync_every=2.0)
        out, _ = dynamics.run(st, model.DriftSpec.atlas(), cfg, 30.0,
                              noise=dynamics.NoiseSource(71, 500))
        m = round(30.0 / 0.01)
        assert abs(out.accumulated_drift.sum() - 30.0) <= 10 * np.finfo(float).eps * m

    def test_requires_leftmost_only_drift(self):
        st = model.sample_ppp_half_line(1.0, 10, seed=0)
        spec = model.DriftSpec(gamma=np.array([1.0, 0.5]), sigma=np.array([1.0]))
        cfg = atlas_cfg(engine="windowed")
        with pytest.raises(ValueError, match="windowed"):
            dynamics.run(st, spec, cfg, 1.0, noise=dynamics.NoiseSource(0, 10))

    def test_margin_tripwire(self):
        # an absurdly thin halo must trip the far-field landing check
        st = model.sample_ppp_half_line(2.0, 2000, seed=80)
        cfg = atlas_cfg(dt=0.05, engine="windowed", sync_every=25.0,
                        window_margin_sd=0.05)
        with pytest.raises(InstabilityError, match="far-field"):
            for r in range(20):
                dynamics.run(st.copy(), model.DriftSpec.atlas(), cfg, 100.0,
                             noise=dynamics.NoiseSource.for_replica(81, r, 2000))


class TestTrajectoryCsv:
    def test_csv_layout(self, tmp_path):
        st = model.sample_ppp_half_line(1.0, 10, seed=1)
        rec = dynamics.TrajectoryRecorder(sample_times=[0.0, 0.1],
                                          quantile_fractions=(0.5,))
        _, rec = dynamics.run(st, model.DriftSpec.atlas(), atlas_cfg(dt=0.01),
                              0.1, noise=dynamics.NoiseSource(1, 10), recorder=rec)
        path = tmp_path / "traj.csv"
        dynamics.write_trajectory_csv(rec, path, meta={"seed": 1})
        lines = path.read_text().splitlines()
        assert lines[0] == "# seed=1"
        assert lines[1] == "t,leftmost,q0.5"
        assert len(lines) == 4
