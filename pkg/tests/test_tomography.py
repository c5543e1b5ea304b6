import numpy as np
import pytest

from itomo.bench import add_noise, generate_instance
from itomo.errors import (
    ConvergenceFailureError,
    InsufficientDataError,
    InvalidDimensionError,
)
from itomo.matrices import (
    canonicalize_phases,
    haar_random_unitary,
    matrix_fidelity,
    resolve_conjugate_ambiguity,
    unitarity_defect,
)
from itomo.optics import ModeQuad
from itomo.reck import n_phases
from itomo.tomography import (
    FLAG_UNDEFINED,
    OptimizerConfig,
    VisibilityDataset,
    VisibilityRecord,
    cost,
    floor_power,
    measurement_plan,
    reconstruct,
    sinkhorn_knopp,
    sst_initial_guess,
    visibility_convert,
)

from oracles import amplitude_central_area, amplitude_side_area


class TestSinkhorn:
    def test_already_doubly_stochastic(self):
        r = np.abs(haar_random_unitary(4, 1)) ** 2
        d, a, dp = sinkhorn_knopp(r, tol=1e-12)
        np.testing.assert_allclose(d, 1.0, atol=1e-10)
        np.testing.assert_allclose(dp, 1.0, atol=1e-10)
        np.testing.assert_allclose(a, r, atol=1e-10)

    def test_construct_then_recover(self, rng):
        a_true = np.abs(haar_random_unitary(5, 2)) ** 2
        d_true = rng.uniform(0.5, 1.0, 5)
        dp_true = rng.uniform(0.5, 1.0, 5)
        r = dp_true[:, None] * a_true * d_true[None, :]
        d, a, dp = sinkhorn_knopp(r, tol=1e-14)
        # one global scalar of freedom, pinned by d[0] = 1
        scale = d_true[0]
        np.testing.assert_allclose(d * scale, d_true, atol=1e-8)
        np.testing.assert_allclose(dp / scale, dp_true, atol=1e-8)
        np.testing.assert_allclose(a, a_true, atol=1e-8)

    def test_2x2_example(self):
        r = np.array([[4.0, 1.0], [1.0, 4.0]]) / 7.3
        d, a, dp = sinkhorn_knopp(r, tol=1e-12)
        np.testing.assert_allclose(a.sum(axis=0), 1.0, atol=1e-10)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(dp[:, None] * a * d[None, :], r, atol=1e-12)

    def test_exact_factorization_always(self, rng):
        r = rng.uniform(0.1, 2.0, (6, 6))
        d, a, dp = sinkhorn_knopp(r)
        np.testing.assert_allclose(dp[:, None] * a * d[None, :], r, rtol=1e-12)

    def test_requires_positive(self):
        with pytest.raises(InvalidDimensionError):
            sinkhorn_knopp(np.array([[1.0, 0.0], [1.0, 1.0]]))

    def test_nonconvergence_error_carries_residual(self):
        r = np.abs(haar_random_unitary(4, 3)) ** 2 * np.outer([1, 2, 3, 4], [4, 3, 2, 1])
        with pytest.raises(ConvergenceFailureError) as exc_info:
            sinkhorn_knopp(r, tol=1e-12, max_iter=1)
        assert exc_info.value.residual is not None

    def test_floor_power(self):
        p = np.array([[1.0, 0.0], [0.5, 0.25]])
        floored, n = floor_power(p)
        assert n == 1
        assert floored[0, 1] == pytest.approx(1e-9)


class TestVisibilityConvert:
    def test_alpha_zero_is_identity(self):
        inst = generate_instance(3, seed=4, loss_low=1.0, loss_high=1.0)
        conv = visibility_convert(inst.dataset, np.abs(inst.u_true) ** 2, np.ones(3))
        for c, rec in zip(conv, inst.dataset.records):
            expected = 1.0 + (1.0 + c.alpha) * (rec.value - 1.0)
            assert c.value == pytest.approx(expected, rel=1e-12)

    def test_value_one_fixed_point(self):
        # V = 1 maps to V' = 1 for any alpha.
        u = haar_random_unitary(3, 5)
        quad = ModeQuad(1, 2, 1, 2)
        records = [VisibilityRecord(quad, 1.0)]
        data = VisibilityDataset(dim=3, records=records, power=np.abs(u) ** 2)
        conv = visibility_convert(data, np.abs(u) ** 2, np.array([1.0, 2.0, 0.5]))
        assert conv[0].value == pytest.approx(1.0, abs=1e-14)

    def test_lossless_two_run_oracle(self):
        # Converted values equal the distinguishable/indistinguishable
        # coincidence-ratio built by brute force from the unitary.
        inst = generate_instance(4, seed=6, loss_low=1.0, loss_high=1.0)
        u = inst.u_true
        a = np.abs(u) ** 2
        conv = visibility_convert(inst.dataset, a, np.ones(4))
        for c in conv:
            q = c.quad
            block = u[np.ix_([q.k - 1, q.l - 1], [q.i - 1, q.j - 1])]
            side = amplitude_side_area(block)
            v_ind = amplitude_central_area(block, inst.i_true) / side
            v_dis = amplitude_central_area(block, 0.0) / side
            oracle = 1.0 + (v_ind - 1.0) / v_dis
            assert c.value == pytest.approx(oracle, abs=1e-10)

    def test_degenerate_cross_flagged(self):
        records = [VisibilityRecord(ModeQuad(1, 2, 1, 2), 0.5)]
        a = np.eye(3)  # zero cross products for the (1,2)x(1,2) quad? no: diag
        a = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        data = VisibilityDataset(dim=3, records=records, power=np.full((3, 3), 0.3))
        conv = visibility_convert(data, a, np.ones(3))
        # cross = a[0,0]a[1,1] + a[0,1]a[1,0] = 1, fine; force zero instead:
        a2 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        conv2 = visibility_convert(data, a2, np.ones(3))
        assert conv[0].flag == "valid"
        assert conv2[0].flag == FLAG_UNDEFINED


class TestSSTGuess:
    def test_noiseless_recovery(self):
        inst = generate_instance(4, seed=7)
        power, _ = floor_power(inst.dataset.power)
        d_in, a_ds, _ = sinkhorn_knopp(power)
        conv = visibility_convert(inst.dataset, a_ds, d_in)
        u0 = sst_initial_guess(conv, a_ds)
        assert unitarity_defect(u0) <= 1e-8
        ref = canonicalize_phases(inst.u_true)
        est = resolve_conjugate_ambiguity(canonicalize_phases(u0), reference=ref)
        assert matrix_fidelity(ref, est) >= 0.999

    def test_real_orthogonal_phases(self):
        # Real matrices have cosine relations at +/-1: all phases 0 or pi.
        rng = np.random.default_rng(8)
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        inst_power = np.abs(q) ** 2
        records = []
        from itomo.optics import visibility

        for i, j in measurement_plan(4, "full"):
            for k in range(1, 5):
                for l in range(k + 1, 5):
                    records.append(VisibilityRecord(
                        ModeQuad(i, j, k, l), visibility(q, 1.0, 0.9, ModeQuad(i, j, k, l))))
        data = VisibilityDataset(dim=4, records=records, power=inst_power)
        d_in, a_ds, _ = sinkhorn_knopp(floor_power(data.power)[0])
        conv = visibility_convert(data, a_ds, d_in)
        u0 = sst_initial_guess(conv, a_ds)
        angles = np.angle(canonicalize_phases(u0, 1, 1))
        wrapped = np.abs(np.sin(angles))
        assert np.all(wrapped < 1e-4)

    def test_noisy_guess_stays_unitary(self):
        fids = []
        for seed in range(12):
            inst = generate_instance(4, seed=500 + seed)
            noisy = add_noise(inst.dataset, 0.1, seed=900 + seed)
            power, _ = floor_power(noisy.power)
            d_in, a_ds, _ = sinkhorn_knopp(power)
            conv = visibility_convert(noisy, a_ds, d_in)
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                u0 = sst_initial_guess(conv, a_ds)
            assert unitarity_defect(u0) <= 1e-8
            ref = canonicalize_phases(inst.u_true)
            est = resolve_conjugate_ambiguity(canonicalize_phases(u0), reference=ref)
            fids.append(matrix_fidelity(ref, est))
        assert np.median(fids) > 0.8

    def test_missing_spanning_quads(self):
        inst = generate_instance(4, seed=9)
        kept = [r for r in inst.dataset.records if (r.quad.i, r.quad.j) != (1, 3)]
        data = VisibilityDataset(dim=4, records=kept, power=inst.dataset.power)
        d_in, a_ds, _ = sinkhorn_knopp(floor_power(data.power)[0])
        conv = visibility_convert(data, a_ds, d_in)
        with pytest.raises(InsufficientDataError):
            sst_initial_guess(conv, a_ds)


class TestCost:
    def test_zero_at_generating_parameters(self):
        # Exact model match on noiseless synthetic data, dims 2..8.
        from itomo.reck import reck_decompose

        for dim in range(2, 9):
            inst = generate_instance(dim, seed=40 + dim)
            params, _ = reck_decompose(inst.u_true)
            x = inst.loss.t_in ** 2
            c = cost(params, x, inst.i_true, inst.dataset)
            assert c < 1e-20

    def test_empty_records(self):
        data = VisibilityDataset(dim=2, records=[], power=np.full((2, 2), 0.5))
        assert cost(np.zeros(n_phases(2)), np.ones(2), 0.9, data) == 0.0

    def test_quadratic_curvature_near_truth(self):
        from itomo.reck import reck_decompose

        inst = generate_instance(4, seed=44)
        params, _ = reck_decompose(inst.u_true)
        x = inst.loss.t_in ** 2
        base = params.phases.copy()
        delta = 1e-4
        for idx in (0, 5, 11):
            hi = base.copy()
            lo = base.copy()
            hi[idx] += delta
            lo[idx] -= delta
            second = (cost(hi, x, inst.i_true, inst.dataset)
                      - 2 * cost(base, x, inst.i_true, inst.dataset)
                      + cost(lo, x, inst.i_true, inst.dataset)) / delta ** 2
            assert second > 0.0

    @pytest.mark.skip(reason="optimizer uses finite-difference Jacobians; no analytic "
                             "gradients are implemented, so the gradient cross-check "
                             "does not apply")
    def test_analytic_gradient(self):
        pass


class TestMeasurementPlan:
    def test_full_counts(self):
        assert len(measurement_plan(4, "full")) == 6
        assert len(measurement_plan(6, "full")) == 15

    def test_linear_counts(self):
        assert len(measurement_plan(4, "linear")) == 8
        for dim in range(2, 11):
            assert len(measurement_plan(dim, "linear")) == 2 * dim

    def test_linear_spans_all_modes(self):
        for dim in (4, 6, 9):
            plan = measurement_plan(dim, "linear")
            for mode in range(1, dim + 1):
                appearances = sum(1 for p in plan if mode in p)
                assert appearances >= 2

    def test_linear_contains_spanning_set(self):
        for dim in (4, 6, 8, 10):
            plan = set(measurement_plan(dim, "linear"))
            for b in range(2, dim + 1):
                assert (1, b) in plan
            for b in range(3, dim + 1):
                assert (2, b) in plan

    def test_invalid(self):
        with pytest.raises(InvalidDimensionError):
            measurement_plan(1, "full")
        with pytest.raises(ValueError):
            measurement_plan(4, "spiral")


class TestRecordAccounting:
    def test_full_mode_record_count(self):
        for dim in (3, 4, 6):
            inst = generate_instance(dim, seed=60 + dim, mode="full")
            n_pairs = dim * (dim - 1) // 2
            assert len(inst.dataset.records) == n_pairs ** 2

    def test_linear_mode_record_count(self):
        for dim in (5, 6, 8):
            inst = generate_instance(dim, seed=70 + dim, mode="linear")
            n_out = dim * (dim - 1) // 2
            assert len(inst.dataset.records) == 2 * dim * n_out


class TestReconstruct:
    def test_noiseless_dim4(self):
        inst = generate_instance(4, seed=80)
        res = reconstruct(inst.dataset, OptimizerConfig(seed=1, n_starts=2))
        ref = canonicalize_phases(inst.u_true)
        est = resolve_conjugate_ambiguity(res.u_opt, reference=ref)
        assert matrix_fidelity(ref, est) >= 0.999
        assert abs(res.i_opt - 0.9) < 0.01
        assert res.converged
        assert unitarity_defect(res.u_opt) <= 1e-8

    def test_recovers_input_ratios(self):
        inst = generate_instance(4, seed=81)
        res = reconstruct(inst.dataset, OptimizerConfig(seed=2, n_starts=2))
        x_true = inst.loss.t_in ** 2
        np.testing.assert_allclose(res.t_ratios, x_true / x_true[0], rtol=1e-4)

    def test_deterministic_bitwise(self):
        inst = generate_instance(4, seed=82)
        noisy = add_noise(inst.dataset, 0.05, seed=5)
        cfg = OptimizerConfig(seed=3, n_starts=3)
        res1 = reconstruct(noisy, cfg)
        res2 = reconstruct(noisy, cfg)
        assert np.array_equal(res1.u_opt, res2.u_opt)
        assert res1.i_opt == res2.i_opt
        assert res1.final_cost == res2.final_cost
        assert np.array_equal(res1.params.phases, res2.params.phases)
        assert np.array_equal(res1.t_ratios, res2.t_ratios)

    def test_scale_invariance_small_factor(self):
        # A global factor on all record values and the power matrix shifts
        # the argmin only at first order; at gamma = 1 + 1e-4 the
        # canonicalized result stays within 1e-6 in fidelity.
        inst = generate_instance(4, seed=83)
        gamma = 1.0 + 1e-4
        scaled_records = [
            VisibilityRecord(r.quad, r.value * gamma, r.sigma, r.flag)
            for r in inst.dataset.records
        ]
        scaled = VisibilityDataset(dim=4, records=scaled_records,
                                   power=inst.dataset.power * gamma)
        cfg = OptimizerConfig(seed=4, n_starts=2)
        res_base = reconstruct(inst.dataset, cfg)
        res_scaled = reconstruct(scaled, cfg)
        assert matrix_fidelity(res_base.u_opt, res_scaled.u_opt) >= 1.0 - 1e-6

    def test_conjugate_datasets_identical(self):
        # Eq.-4 visibilities cannot distinguish U from U*: the generated
        # records agree exactly, so reconstructions coincide.
        inst = generate_instance(4, seed=84)
        u_conj = np.conj(inst.u_true)
        from itomo.optics import visibility

        for rec in inst.dataset.records:
            q = rec.quad
            x_ij = inst.loss.t_in[q.i - 1] ** 2 / inst.loss.t_in[q.j - 1] ** 2
            assert visibility(u_conj, x_ij, inst.i_true, q) == rec.value

    def test_branch_field_and_convention(self):
        inst = generate_instance(4, seed=85)
        res = reconstruct(inst.dataset, OptimizerConfig(seed=5, n_starts=2))
        assert res.branch in ("U", "U*")
        # convention: first clearly non-real entry has positive imaginary part
        flat = res.u_opt.flatten()
        nonreal = flat[np.abs(flat.imag) > 1e-9]
        assert nonreal.size == 0 or nonreal[0].imag > 0

    def test_undefined_records_do_not_crash(self):
        inst = generate_instance(4, seed=86)
        recs = list(inst.dataset.records)
        recs[5] = VisibilityRecord(recs[5].quad, 0.0, 0.0, FLAG_UNDEFINED)
        data = VisibilityDataset(dim=4, records=recs, power=inst.dataset.power)
        res = reconstruct(data, OptimizerConfig(seed=6, n_starts=2))
        assert res.diagnostics["n_undefined"] == 1
        ref = canonicalize_phases(inst.u_true)
        est = resolve_conjugate_ambiguity(res.u_opt, reference=ref)
        assert matrix_fidelity(ref, est) >= 0.999

    def test_dim2_moduli_recovery(self):
        inst = generate_instance(2, seed=87)
        res = reconstruct(inst.dataset, OptimizerConfig(seed=7, n_starts=2))
        ref = canonicalize_phases(inst.u_true)
        est = resolve_conjugate_ambiguity(res.u_opt, reference=ref)
        assert matrix_fidelity(ref, est) >= 0.999


class TestDatasetValidation:
    def test_duplicate_quads_rejected(self):
        q = ModeQuad(1, 2, 1, 2)
        with pytest.raises(InvalidDimensionError):
            VisibilityDataset(dim=3, records=[VisibilityRecord(q, 0.5),
                                              VisibilityRecord(q, 0.6)],
                              power=np.full((3, 3), 0.3))

    def test_negative_power_rejected(self):
        with pytest.raises(InvalidDimensionError):
            VisibilityDataset(dim=2, records=[], power=np.array([[0.5, -0.1], [0.2, 0.5]]))

    def test_bad_flag_rejected(self):
        with pytest.raises(ValueError):
            VisibilityRecord(ModeQuad(1, 2, 1, 2), 0.5, flag="suspect")
