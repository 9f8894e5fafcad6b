import math

import pytest

from perfcast.benchkit import (CSV_HEADER, DEFAULT_COMM_GRIDS,
                               DEFAULT_COMPUTE_GRID, AxisSpec, BenchRecord,
                               SynthHardwareModel, aggregate_latency,
                               aggregate_records, comm_vectors,
                               compute_vectors, gen_comm_grid,
                               gen_compute_grid, ingest_csv, optimizer_vectors,
                               synth_dataset, synth_latency, write_csv)
from perfcast.errors import (ConfigError, DuplicateError, RowError,
                             SchemaError)
from perfcast.workload import OperatorKind, WorkloadVector


class TestAxisSpec:
    def test_additive_enumeration(self):
        assert AxisSpec(1024, 512, 5120).values() == list(range(1024, 5121, 512))

    def test_multiplicative_enumeration(self):
        assert AxisSpec(1, 2, 16, "mul").values() == [1, 2, 4, 8, 16]

    def test_pinned_axis(self):
        assert AxisSpec(2, 0, 2, "mul").values() == [2]

    def test_end_is_honored_not_rounded(self):
        # end=8129 stops at 7680; the next step (8192) would overshoot
        assert AxisSpec(2048, 512, 8129).values()[-1] == 7680

    def test_parse_textual_steps(self):
        assert AxisSpec.parse(1024, "+512", 2048).values() == [1024, 1536, 2048]
        assert AxisSpec.parse(1, "x2", 8).values() == [1, 2, 4, 8]

    def test_invalid_specs(self):
        with pytest.raises(ConfigError):
            AxisSpec(10, 1, 5)
        with pytest.raises(ConfigError):
            AxisSpec(1, 0, 5)
        with pytest.raises(ConfigError):
            AxisSpec(1, 1, 5, "mul")
        with pytest.raises(ConfigError):
            AxisSpec(1, 1, 5, "weird")


class TestGrids:
    def test_default_compute_grid_size(self):
        pts = gen_compute_grid()
        assert len(pts) == 5 * 2 * 9 * 9 * 12
        assert all(set(p) == {"mp", "b", "h", "l", "d"} for p in pts[:3])

    def test_comm_grid_p2p_pins_two_processes(self):
        pairs = gen_comm_grid(DEFAULT_COMM_GRIDS[OperatorKind.PP_P2P], stride=200)
        assert {p for _, p in pairs} == {2}

    def test_comm_grid_stride_subsamples(self):
        spec = {"entries": AxisSpec(100, 50, 400), "processes": AxisSpec(2, 2, 4, "mul")}
        assert gen_comm_grid(spec) == [(100, 2), (150, 2), (200, 2), (250, 2),
                                       (300, 2), (350, 2), (400, 2),
                                       (100, 4), (150, 4), (200, 4), (250, 4),
                                       (300, 4), (350, 4), (400, 4)]
        assert gen_comm_grid(spec, stride=3) == [(100, 2), (250, 2), (400, 2),
                                                 (100, 4), (250, 4), (400, 4)]

    def test_compute_vectors_skip_indivisible_points(self):
        points = [dict(mp=4, b=2, h=8, l=64, d=512),
                  dict(mp=3, b=2, h=8, l=64, d=512)]  # 3 does not divide 8
        vecs = compute_vectors([OperatorKind.LINEAR1], points, v0=1000)
        assert len(vecs) == 2  # fwd+bwd of the valid point only

    def test_optimizer_vectors(self):
        vecs = optimizer_vectors([1, 2], [128], [1, 3])
        assert [v.feats for v in vecs] == [(1, 128, 1), (1, 128, 3),
                                           (2, 128, 1), (2, 128, 3)]

    def test_comm_vectors_pack_nodes(self):
        vecs = comm_vectors(OperatorKind.DP_ALL_REDUCE, [(1000, 8)], gpus_per_node=4)
        assert vecs[0].feats == (1000, 2, 4)


HW = SynthHardwareModel()


def _vec(op, direction, feats):
    return WorkloadVector(op, direction, feats)


class TestSynthOracle:
    def test_single_process_collective_is_kernel_floor(self):
        vec = _vec(OperatorKind.MP_ALL_REDUCE, "na", (10**6, 1, 1))
        assert synth_latency(vec, HW) == pytest.approx(5.0)

    def test_two_rank_allreduce_equals_p2p(self):
        # ring all-reduce moves 2(p-1)/p of the buffer; at p=2 that is one
        # buffer's worth, the same as a point-to-point send
        ar = _vec(OperatorKind.MP_ALL_REDUCE, "na", (10**6, 1, 2))
        p2p = _vec(OperatorKind.PP_P2P, "na", (10**6, 1, 2))
        assert synth_latency(ar, HW) == pytest.approx(synth_latency(p2p, HW))

    def test_allgather_moves_half_of_allreduce(self):
        ar = _vec(OperatorKind.DP_ALL_REDUCE, "na", (10**7, 1, 4))
        ag = _vec(OperatorKind.DP_ALL_GATHER, "na", (10**7, 1, 4))
        fixed = HW.kernel_latency * 1e6 + HW.alpha * 2 * 1e6
        assert (synth_latency(ar, HW) - fixed) == pytest.approx(
            2 * (synth_latency(ag, HW) - fixed))

    def test_inter_node_penalty_applies(self):
        intra = _vec(OperatorKind.DP_ALL_REDUCE, "na", (10**7, 1, 4))
        inter = _vec(OperatorKind.DP_ALL_REDUCE, "na", (10**7, 4, 1))
        fixed = HW.kernel_latency * 1e6 + HW.alpha * 2 * 1e6
        assert (synth_latency(inter, HW) - fixed) == pytest.approx(
            2 * (synth_latency(intra, HW) - fixed))

    def test_backward_costs_double(self):
        fwd = _vec(OperatorKind.LINEAR1, "fwd", (4096, 4096, 4096))
        bwd = _vec(OperatorKind.LINEAR1, "bwd", (4096, 4096, 4096))
        k = HW.kernel_latency * 1e6
        assert synth_latency(bwd, HW) - k == pytest.approx(
            2 * (synth_latency(fwd, HW) - k))

    def test_monotone_in_each_feature(self):
        base = (512, 512, 512)
        t0 = synth_latency(_vec(OperatorKind.LINEAR1, "fwd", base), HW)
        for i in range(3):
            grown = tuple(f * 2 if j == i else f for j, f in enumerate(base))
            assert synth_latency(_vec(OperatorKind.LINEAR1, "fwd", grown), HW) >= t0

    def test_tile_discontinuity_slows_misaligned_shapes(self):
        hw = SynthHardwareModel(tile=64, eff_low=0.5, eff_high=0.95)
        aligned = _vec(OperatorKind.LINEAR1, "fwd", (4096, 4096, 4096))
        jagged = _vec(OperatorKind.LINEAR1, "fwd", (4096, 4096, 4128))
        per_flop_a = synth_latency(aligned, hw) / (4096 ** 3)
        per_flop_j = synth_latency(jagged, hw) / (4096 * 4096 * 4128)
        assert per_flop_j > per_flop_a * 1.2

    def test_noise_reproducible_under_seed(self):
        hw = SynthHardwareModel(noise_sigma=0.05)
        vec = _vec(OperatorKind.LINEAR1, "fwd", (512, 512, 512))
        assert synth_latency(vec, hw, seed=7) == synth_latency(vec, hw, seed=7)
        assert synth_latency(vec, hw, seed=7) != synth_latency(vec, hw, seed=8)

    def test_invalid_hardware_model(self):
        with pytest.raises(ConfigError):
            SynthHardwareModel(eff_low=0.95, eff_high=0.9)
        with pytest.raises(ConfigError):
            SynthHardwareModel(inter_node_penalty=0.5)


class TestDatasetAndCsv:
    def _vectors(self):
        return [_vec(OperatorKind.LINEAR1, "fwd", (256, 256, 256)),
                _vec(OperatorKind.QKT, "bwd", (8, 64, 32, 64)),
                _vec(OperatorKind.MP_ALL_REDUCE, "na", (10**6, 1, 4))]

    def test_dataset_deterministic_even_with_noise(self):
        hw = SynthHardwareModel(noise_sigma=0.05)
        a = synth_dataset(self._vectors(), hw, seed=3, replicates=4)
        b = synth_dataset(self._vectors(), hw, seed=3, replicates=4)
        assert a == b
        assert len(a) == 12

    def test_csv_round_trip(self, tmp_path):
        hw = SynthHardwareModel(noise_sigma=0.02)
        records = synth_dataset(self._vectors(), hw, seed=1, replicates=3,
                                out_path=tmp_path / "bench.csv")
        assert ingest_csv(tmp_path / "bench.csv") == records

    def test_csv_byte_identical_for_same_seed(self, tmp_path):
        hw = SynthHardwareModel(noise_sigma=0.02)
        synth_dataset(self._vectors(), hw, seed=1, out_path=tmp_path / "a.csv")
        synth_dataset(self._vectors(), hw, seed=1, out_path=tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_ingest_rejects_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("op,dir,latency\nLinear1,fwd,1.0\n")
        with pytest.raises(SchemaError):
            ingest_csv(p)

    def test_ingest_reports_line_number(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(",".join(CSV_HEADER) + "\n"
                     "Linear1,fwd,256,256,256,,1.000,hw,0\n"
                     "Linear1,fwd,256,256,512,,-3.0,hw,0\n")
        with pytest.raises(RowError) as exc:
            ingest_csv(p)
        assert "line 3" in str(exc.value)

    def test_ingest_rejects_unknown_op(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(",".join(CSV_HEADER) + "\n"
                     "Linear9,fwd,256,256,256,,1.000,hw,0\n")
        with pytest.raises(RowError):
            ingest_csv(p)

    def test_ingest_rejects_duplicates(self, tmp_path):
        p = tmp_path / "dup.csv"
        row = "Linear1,fwd,256,256,256,,1.000,hw,0\n"
        p.write_text(",".join(CSV_HEADER) + "\n" + row + row)
        with pytest.raises(DuplicateError):
            ingest_csv(p)

    def test_large_latency_survives_quantization(self, tmp_path):
        rec = BenchRecord(OperatorKind.LINEAR1, "fwd", (1, 1, 1),
                          123456789.125, "hw", 0)
        write_csv([rec], tmp_path / "big.csv")
        assert ingest_csv(tmp_path / "big.csv")[0].latency_us == 123456789.125


class TestAggregation:
    def test_middle_five_mean(self):
        assert aggregate_latency(range(1, 11)) == 5.0

    def test_median_fallback_below_five(self):
        assert aggregate_latency([1.0, 2.0, 10.0]) == 2.0
        assert aggregate_latency([4.0, 2.0]) == 3.0

    def test_other_modes(self):
        assert aggregate_latency([3.0, 1.0, 2.0], mode="min") == 1.0
        assert aggregate_latency([3.0, 1.0, 2.0], mode="median") == 2.0
        with pytest.raises(ConfigError):
            aggregate_latency([1.0], mode="p99")
        with pytest.raises(ConfigError):
            aggregate_latency([])

    def test_aggregate_records_groups_replicates(self):
        recs = [BenchRecord(OperatorKind.LINEAR1, "fwd", (8, 8, 8), float(v),
                            "hw", r) for r, v in enumerate(range(1, 11))]
        out = aggregate_records(recs)
        assert len(out) == 1
        assert out[0].latency_us == 5.0
        assert out[0].replicate == 0
