from datetime import date, datetime

import numpy as np
import pytest

from stpn import data as D
from stpn import synth
from stpn.data import FlightRecord


def rec(origin, dest, dep_time, arr_time, dep_delay, arr_delay):
    return FlightRecord(
        origin=origin,
        destination=dest,
        scheduled_departure=datetime.fromisoformat(dep_time),
        scheduled_arrival=datetime.fromisoformat(arr_time),
        departure_delay=dep_delay,
        arrival_delay=arr_delay,
    )


AIRPORTS = ["AAA", "BBB", "CCC"]
DAY = "2021-03-01"


class TestAggregate:
    def test_clip_at_30_minutes(self):
        records = [rec("AAA", "BBB", f"{DAY}T08:00", f"{DAY}T10:00", 5, 45)]
        delays, _ = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        t = delays.time_axis.index(f"{DAY}T10:00")
        assert delays.values[1, t, 0] == 30.0

    def test_mean_of_two_flights_in_one_cell(self):
        records = [
            rec("AAA", "BBB", f"{DAY}T08:00", f"{DAY}T10:05", 0, 10),
            rec("CCC", "BBB", f"{DAY}T08:00", f"{DAY}T10:20", 0, 20),
        ]
        delays, _ = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        t = delays.time_axis.index(f"{DAY}T10:00")
        assert delays.values[1, t, 0] == 15.0
        assert delays.mask[1, t, 0]

    def test_empty_cell_masked_with_zero_value(self):
        records = [rec("AAA", "BBB", f"{DAY}T08:00", f"{DAY}T10:00", 5, 5)]
        delays, _ = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        t = delays.time_axis.index(f"{DAY}T12:00")
        assert not delays.mask[2, t, 0]
        assert delays.values[2, t, 0] == 0.0

    def test_negative_delays_kept_and_clipped_below(self):
        records = [rec("AAA", "BBB", f"{DAY}T08:00", f"{DAY}T10:00", -12, -50)]
        delays, _ = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        t_dep = delays.time_axis.index(f"{DAY}T08:00")
        t_arr = delays.time_axis.index(f"{DAY}T10:00")
        assert delays.values[0, t_dep, 1] == -12.0
        assert delays.values[1, t_arr, 0] == -30.0

    def test_unknown_airport_skipped_and_counted(self):
        records = [
            rec("ZZZ", "BBB", f"{DAY}T08:00", f"{DAY}T10:00", 5, 5),
            rec("AAA", "BBB", f"{DAY}T08:00", f"{DAY}T10:00", 5, 5),
        ]
        delays, report = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        assert report.unknown_airport == 1
        assert delays.mask.sum() == 2  # one dep cell + one arr cell

    def test_out_of_window_counted(self):
        records = [rec("AAA", "BBB", f"{DAY}T03:00", f"{DAY}T05:00", 5, 5)]
        _, report = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        assert report.out_of_window == 2

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        records = []
        for i in range(40):
            o, d = rng.choice(3, size=2, replace=False)
            hour = int(rng.integers(6, 22))
            records.append(
                rec(AIRPORTS[o], AIRPORTS[d], f"{DAY}T{hour:02d}:00", f"{DAY}T{hour + 1:02d}:30",
                    float(rng.integers(-20, 60)), float(rng.integers(-20, 60)))
            )
        d1, _ = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        shuffled = list(records)
        rng.shuffle(shuffled)
        d2, _ = D.aggregate(shuffled, AIRPORTS, start=date(2021, 3, 1), days=1)
        np.testing.assert_array_equal(d1.values, d2.values)
        np.testing.assert_array_equal(d1.mask, d2.mask)

    def test_observed_values_within_clip_bounds(self):
        rng = np.random.default_rng(5)
        records = [
            rec("AAA", "BBB", f"{DAY}T09:00", f"{DAY}T11:00",
                float(rng.normal(0, 60)), float(rng.normal(0, 60)))
            for _ in range(50)
        ]
        delays, _ = D.aggregate(records, AIRPORTS, start=date(2021, 3, 1), days=1)
        obs = delays.values[delays.mask]
        assert np.all(obs <= 30.0) and np.all(obs >= -30.0)


class TestTimeAxis:
    def test_default_window_has_36_slots(self):
        axis = D.build_time_axis(date(2021, 3, 1), 2)
        assert len(axis) == 72
        assert axis[0] == "2021-03-01T06:00"
        assert axis[35] == "2021-03-01T23:30"
        assert axis[36] == "2021-03-02T06:00"

    def test_slot_positions_wrap_daily(self):
        delays, _ = D.aggregate(
            [rec("AAA", "BBB", f"{DAY}T08:00", f"{DAY}T10:00", 1, 1)],
            AIRPORTS, start=date(2021, 3, 1), days=3,
        )
        pos = delays.slot_positions()
        assert pos[0] == 0 and pos[35] == 35 and pos[36] == 0


class TestZscore:
    def test_fit_ignores_masked_and_post_train_entries(self):
        rng = np.random.default_rng(1)
        values = rng.normal(10, 5, size=(3, 100, 2))
        mask = rng.random((3, 100, 2)) > 0.2
        values = np.where(mask, values, 0.0)
        norm = D.zscore_fit(values, mask, train_stop=70)
        obs = values[:, :70, 0][mask[:, :70, 0]]
        assert norm.mean[0] == pytest.approx(obs.mean())
        assert norm.std[0] == pytest.approx(obs.std())
        # later entries must not influence the statistics
        tampered = values.copy()
        tampered[:, 70:, :] = 1e6
        norm2 = D.zscore_fit(tampered, mask, train_stop=70)
        np.testing.assert_array_equal(norm2.mean, norm.mean)
        np.testing.assert_array_equal(norm2.std, norm.std)

    def test_normalized_training_entries_standardized(self):
        rng = np.random.default_rng(2)
        values = rng.normal(7, 3, size=(4, 200, 2))
        mask = np.ones((4, 200, 2), bool)
        norm = D.zscore_fit(values, mask, train_stop=200)
        z = norm.apply(values, mask)
        assert abs(z[:, :, 0].mean()) < 1e-9
        assert abs(z[:, :, 0].std() - 1) < 1e-9

    def test_roundtrip_on_observed(self):
        rng = np.random.default_rng(3)
        values = rng.normal(5, 2, size=(2, 50, 2))
        mask = rng.random((2, 50, 2)) > 0.3
        norm = D.zscore_fit(values, mask, train_stop=50)
        back = norm.invert(norm.apply(values, mask))
        np.testing.assert_allclose(back[mask], values[mask], atol=1e-12)

    def test_masked_cells_map_to_zero(self):
        values = np.ones((1, 4, 2)) * 9
        mask = np.ones((1, 4, 2), bool)
        mask[0, 1, :] = False
        values = np.where(mask, values + np.arange(4)[None, :, None], 0.0)
        norm = D.zscore_fit(values, mask, train_stop=4)
        z = norm.apply(values, mask)
        assert np.all(z[0, 1, :] == 0.0)

    def test_degenerate_channel_rejected(self):
        values = np.ones((2, 10, 2))
        mask = np.ones((2, 10, 2), bool)
        with pytest.raises(ValueError, match="zero variance"):
            D.zscore_fit(values, mask, train_stop=10)


class TestSplit:
    def test_100_steps(self):
        s = D.chronological_split(100)
        assert s.train == (0, 70) and s.val == (70, 80) and s.test == (80, 100)

    def test_10_steps(self):
        s = D.chronological_split(10)
        assert s.train == (0, 7) and s.val == (7, 8) and s.test == (8, 10)

    def test_floor_based_indices(self):
        s = D.chronological_split(99)
        assert s.train == (0, 69) and s.val == (69, 78) and s.test == (78, 99)

    def test_segments_cover_and_do_not_overlap(self):
        for n in (10, 37, 100, 1001):
            s = D.chronological_split(n)
            assert s.train[1] == s.val[0] and s.val[1] == s.test[0]
            assert s.train[0] == 0 and s.test[1] == n


class TestWindows:
    def _bundle(self, t_steps=120, n=3, seed=0):
        rng = np.random.default_rng(seed)
        values = rng.normal(5, 3, size=(n, t_steps, 2))
        mask = rng.random((n, t_steps, 2)) > 0.1
        values = np.where(mask, values, 0.0)
        axis = D.build_time_axis(date(2021, 3, 1), (t_steps + 35) // 36)[:t_steps]
        delays = D.DelayTensor(values, mask, axis, 36, [f"A{i}" for i in range(n)])
        cov = D.CovariateSeq(np.zeros((n, t_steps), dtype=int), ["normal"])
        return D.make_bundle(delays, cov)

    def test_exact_boundary_yields_one_sample(self):
        bundle = self._bundle(t_steps=24)
        ws = D.WindowedDataset(bundle.delays, bundle.covariates, bundle.norm, 12, 12, (0, 24))
        assert len(ws) == 1

    def test_too_short_segment_warns_and_is_empty(self):
        bundle = self._bundle(t_steps=20)
        with pytest.warns(RuntimeWarning, match="no samples"):
            ws = D.WindowedDataset(bundle.delays, bundle.covariates, bundle.norm, 12, 12, (0, 20))
        assert len(ws) == 0

    def test_sample_fields_and_positions(self):
        bundle = self._bundle()
        ws = bundle.windows(12, 6, "train")
        s = ws.sample(0)
        assert s.x_norm.shape == (3, 12, 2)
        assert s.y_minutes.shape == (3, 6, 2)
        assert s.pos_in.shape == (12,) and s.pos_out.shape == (6,)
        np.testing.assert_array_equal(s.pos_out[:1], (s.pos_in[-1] + 1) % 36)
        # input/target contiguity
        assert s.t_start + 12 + 6 <= bundle.split.train[1]

    def test_fully_masked_target_windows_dropped(self):
        bundle = self._bundle()
        bundle.delays.mask[:, 30:48, :] = False
        ws = D.WindowedDataset(bundle.delays, bundle.covariates, bundle.norm, 6, 6, (0, 60))
        starts = set(ws.starts.tolist())
        # windows whose whole target [t0+6, t0+12) is inside the masked span
        for t0 in range(24, 37):
            assert t0 not in starts

    def test_windows_respect_split_boundaries(self):
        bundle = self._bundle()
        for seg_name in ("train", "val", "test"):
            seg = getattr(bundle.split, seg_name)
            ws = bundle.windows(6, 3, seg_name)
            for t0 in ws.starts:
                assert seg[0] <= t0 and t0 + 9 <= seg[1]

    def test_stride_thins_samples(self):
        bundle = self._bundle()
        dense = D.WindowedDataset(bundle.delays, bundle.covariates, bundle.norm, 6, 3, (0, 100))
        sparse = D.WindowedDataset(
            bundle.delays, bundle.covariates, bundle.norm, 6, 3, (0, 100), stride=3
        )
        assert len(sparse) <= (len(dense) + 2) // 3
        assert set(sparse.starts) <= set(dense.starts)

    def test_regional_window_configs_accepted(self):
        bundle = self._bundle(t_steps=140)
        # US-scale h=12, p=12 / China-scale h=36, p=12 both produce windows
        assert len(D.WindowedDataset(bundle.delays, bundle.covariates, bundle.norm, 12, 12, (0, 140))) > 0
        assert len(D.WindowedDataset(bundle.delays, bundle.covariates, bundle.norm, 36, 12, (0, 140))) > 0


class TestDatasetArtifact:
    def test_roundtrip_and_byte_stability(self, tmp_path, synth_small):
        bundle, _, _ = synth_small
        p1, p2 = tmp_path / "a.stpn", tmp_path / "b.stpn"
        D.save_dataset(bundle, p1)
        D.save_dataset(bundle, p2)
        assert p1.read_bytes() == p2.read_bytes()

        loaded = D.load_dataset(p1)
        np.testing.assert_array_equal(loaded.delays.values, bundle.delays.values)
        np.testing.assert_array_equal(loaded.delays.mask, bundle.delays.mask)
        np.testing.assert_array_equal(loaded.covariates.codes, bundle.covariates.codes)
        assert loaded.delays.time_axis == bundle.delays.time_axis
        assert loaded.split == bundle.split
        np.testing.assert_array_equal(loaded.norm.mean, bundle.norm.mean)

    def test_truncated_payload_rejected(self, tmp_path, synth_small):
        bundle, _, _ = synth_small
        p = tmp_path / "t.stpn"
        D.save_dataset(bundle, p)
        raw = p.read_bytes()
        p.write_bytes(raw[: len(raw) - 64])
        with pytest.raises(ValueError, match="truncated"):
            D.load_dataset(p)

    def test_corrupted_header_rejected(self, tmp_path, synth_small):
        bundle, _, _ = synth_small
        p = tmp_path / "c.stpn"
        D.save_dataset(bundle, p)
        raw = bytearray(p.read_bytes())
        raw[20] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(ValueError):
            D.load_dataset(p)


class TestSynthetic:
    def test_same_seed_identical(self):
        a = synth.gen_synthetic(7, 6, 10, synth.default_planted(6, seed=7))
        b = synth.gen_synthetic(7, 6, 10, synth.default_planted(6, seed=7))
        np.testing.assert_array_equal(a[0].values, b[0].values)
        np.testing.assert_array_equal(a[0].mask, b[0].mask)
        np.testing.assert_array_equal(a[1].codes, b[1].codes)

    def test_planted_lag_correlation_strong(self, synth_small):
        bundle, _, truth = synth_small
        lag = truth["lag_steps"]
        src, snk = truth["source_index"], truth["sink_index"]
        dep = bundle.delays.values[src, :-lag, 1]
        arr = bundle.delays.values[snk, lag:, 0]
        corr = np.corrcoef(dep, arr)[0, 1]
        assert corr > 0.5

    def test_zero_weights_no_propagation(self):
        planted = synth.PlantedPropagation(od_weights=np.zeros((6, 6)), lag_steps=2)
        delays, _, _, _ = synth.gen_synthetic(3, 6, 20, planted)
        dep = delays.values[0, :-2, 1]
        arr = delays.values[1, 2:, 0]
        assert abs(np.corrcoef(dep, arr)[0, 1]) < 0.1

    def test_mask_fraction_close_to_declared(self, synth_small):
        bundle, _, truth = synth_small
        frac = 1.0 - bundle.delays.mask.mean()
        assert frac == pytest.approx(truth["mask_fraction"], abs=0.02)

    def test_masked_cells_hold_zero(self, synth_small):
        bundle, _, _ = synth_small
        assert np.all(bundle.delays.values[~bundle.delays.mask] == 0.0)

    def test_graph_relations_and_weather_codes(self, synth_small):
        bundle, graph, _ = synth_small
        assert [k for k, _ in graph.relations] == ["distance", "od", "do"]
        assert bundle.covariates.codes.max() < len(bundle.covariates.categories)

    def test_norm_stats_use_train_segment_only(self, synth_small):
        bundle, _, _ = synth_small
        stop = bundle.split.train[1]
        norm2 = D.zscore_fit(bundle.delays.values, bundle.delays.mask, stop)
        np.testing.assert_array_equal(norm2.mean, bundle.norm.mean)
        np.testing.assert_array_equal(norm2.std, bundle.norm.std)
