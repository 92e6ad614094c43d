import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_window, ring_camera
from nbvpose.errors import NoVisibleCandidate, NumericalFailure
from nbvpose.estimator import EnergyWeights, EstimationWindow, energy_pose
from nbvpose.flight import DroneKinematicState, FlightModelParams, predict_trajectory
from nbvpose.geometry import Intrinsics, look_at
from nbvpose.planner import (
    FLIGHT_DIRECTIONS,
    CandidateView,
    baseline_policy,
    flight_direction,
    forecast_measurements,
    forecast_poses,
    generate_fixed_candidates,
    generate_flight_candidates,
    generate_ring_candidates,
    hessian,
    is_visible,
    numerical_hessian,
    score_candidates,
    select_best,
    uncertainty_from_hessian,
    with_future_measurements,
)
from nbvpose.sensing import NoiseModel, detect_2d
from nbvpose.skeleton import HIP, compute_bone_lengths

K = Intrinsics()


def forecast_window(rng, **kw):
    window, truth, calib = make_window(rng, **kw)
    return forecast_poses(window, 1, calib), calib


class TestUncertainty:
    @pytest.mark.parametrize("omega,n", [(0.5, 3), (2.0, 10), (7.0, 1)])
    def test_isotropic_quadratic(self, omega, n):
        H = numerical_hessian(lambda x: 2 * omega * x, np.zeros(n))
        np.testing.assert_allclose(H, 2 * omega * np.eye(n), atol=1e-9)
        assert uncertainty_from_hessian(H).score == pytest.approx(n / (2 * omega))

    def test_diagonal_example(self):
        omega = np.array([0.5, 2.0])
        H = numerical_hessian(lambda x: 2 * omega * x, np.ones(2))
        assert uncertainty_from_hessian(H).score == pytest.approx(1.25, abs=1e-9)

    def test_floor(self):
        report = uncertainty_from_hessian(np.diag([1.0, -3.0, 0.0]), lam_floor=1e-6)
        assert report.score == pytest.approx(1.0 + 2e6)

    def test_restricted_trace(self, rng):
        A = rng.normal(size=(6, 6))
        H = A @ A.T + 6 * np.eye(6)
        mask = np.array([False, True, False, True, True, False])
        expected = np.trace(np.linalg.inv(H)[np.ix_(mask, mask)])
        assert uncertainty_from_hessian(H, restrict=mask).score == pytest.approx(expected, rel=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            uncertainty_from_hessian(np.zeros((2, 3)))

    def test_non_finite(self):
        with pytest.raises(NumericalFailure):
            uncertainty_from_hessian(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestWindowHessian:
    def test_symmetric_positive(self, rng):
        fw, calib = forecast_window(rng, sigma_2d=3.0, sigma_3d=0.03)
        report = hessian(fw, EnergyWeights.decision(), calib, K)
        np.testing.assert_allclose(report.hessian, report.hessian.T, atol=1e-12)
        assert np.all(np.isreal(report.eigenvalues))
        assert report.score > 0

    def test_fd_matches_analytic(self, rng):
        fw, calib = forecast_window(rng, sigma_2d=3.0, sigma_3d=0.03, jitter=0.02)
        w = EnergyWeights.decision()
        a = hessian(fw, w, calib, K, method="analytic")
        f = hessian(fw, w, calib, K, method="fd")
        assert np.linalg.norm(a.hessian - f.hessian) / np.linalg.norm(a.hessian) < 1e-6
        with pytest.raises(ValueError):
            hessian(fw, w, calib, K, method="autodiff")

    def test_fd_matches_second_difference_of_energy(self):
        rng = np.random.default_rng(8)
        for _ in range(3):
            window, _, calib = make_window(rng, n_frames=2, sigma_2d=3.0, sigma_3d=0.03, jitter=0.03)
            w = EnergyWeights.decision()
            H = hessian(window, w, calib, K, method="fd").hessian
            x0 = window.poses.ravel()

            def energy(x):
                return energy_pose(window.with_poses(x.reshape(window.poses.shape)), w, calib, K).total

            h = 1e-3
            idx = rng.choice(x0.size, size=12, replace=False)
            num = np.empty((12, 12))
            for a, i in enumerate(idx):
                for b, j in enumerate(idx):
                    e = np.zeros_like(x0)
                    e[i] += h
                    f = np.zeros_like(x0)
                    f[j] += h
                    num[a, b] = (energy(x0 + e + f) - energy(x0 + e - f) - energy(x0 - e + f)
                                 + energy(x0 - e - f)) / (4 * h * h)
            sub = H[np.ix_(idx, idx)]
            assert np.linalg.norm(sub - num) / np.linalg.norm(sub) < 1e-3

    def test_future_only_smaller(self, rng):
        fw, calib = forecast_window(rng)
        full = hessian(fw, EnergyWeights.decision(), calib, K).score
        future = hessian(fw, EnergyWeights.decision(), calib, K, future_only=True).score
        assert 0 < future < full


class TestForecast:
    def test_static(self, pose):
        window = EstimationWindow(np.stack([pose] * 3), [None] * 3)
        fw = forecast_poses(window, 3, compute_bone_lengths(pose))
        assert len(fw) == 6 and fw.horizon == 3
        for p in fw.poses[3:]:
            np.testing.assert_allclose(p, pose, atol=1e-12)

    def test_rigid_translation(self, pose):
        v = np.array([0.2, -0.1, 0.0])
        window = EstimationWindow(np.stack([pose + i * v for i in range(3)]), [None] * 3, frames=[4, 5, 6])
        fw = forecast_poses(window, 3, compute_bone_lengths(pose))
        for i, p in enumerate(fw.poses[3:], start=3):
            np.testing.assert_allclose(p, pose + i * v, atol=1e-12)
        assert list(fw.frames) == [4, 5, 6, 7, 8, 9]
        assert fw.measurements[3:] == [None] * 3

    def test_bone_term_pulls_back(self, pose):
        grow = pose.copy()
        grow[1:] = pose[HIP] + 1.05 * (pose[1:] - pose[HIP])
        window = EstimationWindow(np.stack([pose, grow]), [None] * 2)
        calib = compute_bone_lengths(pose)
        raw = forecast_poses(window, 2, calib, refine=False)
        refined = forecast_poses(window, 2, calib)
        w = EnergyWeights.decision()

        def bone(fw):
            return energy_pose(EstimationWindow(fw.poses[2:], [None] * 2), w, calib, K).bone

        assert bone(refined) < bone(raw)

    def test_single_frame_is_static(self, pose):
        fw = forecast_poses(EstimationWindow(pose[None], [None]), 2, compute_bone_lengths(pose))
        np.testing.assert_array_equal(fw.poses[1], pose)

    def test_replaces_existing_future(self, rng):
        fw, calib = forecast_window(rng)
        again = forecast_poses(fw, 2, calib)
        assert len(again) == len(fw) + 1 and again.horizon == 2


class TestForecastMeasurements:
    def test_zero_data_terms(self, rng):
        fw, calib = forecast_window(rng)
        cand = generate_ring_candidates(fw.poses[-1][HIP], count=18, height=1.5)[5]
        meas = forecast_measurements(fw.poses[-1:], cand, K, fw.lift_scale)
        scored = with_future_measurements(fw, meas)
        e = energy_pose(scored, EnergyWeights.decision(), calib, K)
        assert e.proj == pytest.approx(0.0, abs=1e-16)
        assert e.lift == pytest.approx(0.0, abs=1e-20)

    def test_equals_clean_detector(self, pose):
        cand = CandidateView(0, (ring_camera(70.0),))
        meas = forecast_measurements(pose[None], cand, K)
        det = detect_2d(pose, cand.cameras[0], K, NoiseModel(0.0, 0.0))
        np.testing.assert_array_equal(meas[0].detection2d.joints2d, det.joints2d)

    def test_lift_scale_undone(self, pose):
        cand = CandidateView(0, (ring_camera(70.0),))
        meas = forecast_measurements(pose[None], cand, K, lift_scale=2.0)[0]
        cam = cand.cameras[0]
        np.testing.assert_allclose(2.0 * meas.detection3d.joints3d_rel, cam.to_camera(pose) - cam.to_camera(pose[HIP]))


class TestScoring:
    def test_select_best(self):
        cands = [CandidateView(i, (), uncertainty=s) for i, s in enumerate([3.0, 1.0, 2.0])]
        assert select_best(cands).id == 1

    def test_tie_goes_to_lowest_id(self):
        cands = [CandidateView(i, (), uncertainty=1.0) for i in (4, 2, 7)]
        assert select_best(cands).id == 2
        with pytest.raises(NoVisibleCandidate):
            select_best([])

    def test_duplicates_score_identically(self, rng):
        fw, calib = forecast_window(rng)
        cam = ring_camera(33.0, target=fw.poses[-1][HIP])
        scored = score_candidates(fw, [CandidateView(0, (cam,)), CandidateView(1, (cam,))],
                                  EnergyWeights.decision(), calib, K)
        assert abs(scored[0].uncertainty - scored[1].uncertainty) < 1e-9

    def test_weight_scaling(self, rng):
        fw, calib = forecast_window(rng, sigma_2d=3.0, sigma_3d=0.03)
        ring = generate_ring_candidates(fw.poses[-1][HIP], count=18, height=1.5)
        base = score_candidates(fw, ring, EnergyWeights.decision(), calib, K)
        c = 3.0
        scaled = score_candidates(fw, ring, EnergyWeights.decision().scaled(c), calib, K)
        for a, b in zip(base, scaled):
            assert b.uncertainty == pytest.approx(a.uncertainty / c, rel=1e-9)
        assert select_best(base).id == select_best(scaled).id

    def test_invisible_dropped(self, rng):
        fw, calib = forecast_window(rng)
        hip = fw.poses[-1][HIP]
        away = look_at(hip + [7.0, 0.0, 0.5], hip + [14.0, 0.0, 0.5])
        good = ring_camera(0.0, target=hip)
        scored = score_candidates(fw, [CandidateView(0, (away,)), CandidateView(1, (good,))],
                                  EnergyWeights.decision(), calib, K)
        assert [c.id for c in scored] == [1]
        assert not is_visible(CandidateView(0, (away,)), fw.poses[-1:], K)
        with pytest.raises(NoVisibleCandidate):
            score_candidates(fw, [CandidateView(0, (away,))], EnergyWeights.decision(), calib, K)


class TestRing:
    def test_spacing(self):
        ring = generate_ring_candidates([1.0, 2.0, 1.0], radius=7.0, count=18, height=1.5)
        az = np.array([c.azimuth for c in ring])
        np.testing.assert_allclose(np.diff(az), 20.0, atol=1e-9)
        for c in ring:
            pos = c.cameras[0].position
            assert np.hypot(pos[0] - 1.0, pos[1] - 2.0) == pytest.approx(7.0)
            assert pos[2] == pytest.approx(1.5)

    def test_cameras_look_at_targets(self, k):
        targets = [np.array([0.0, 0.0, 1.0]), np.array([0.2, 0.0, 1.0])]
        ring = generate_ring_candidates(targets[0], count=6, targets=targets)
        for c in ring:
            assert len(c.cameras) == 2
            for cam, t in zip(c.cameras, targets):
                np.testing.assert_allclose(cam.to_camera(t)[:2], 0.0, atol=1e-12)

    def test_vertical_plane(self):
        ring = generate_ring_candidates(np.zeros(3), count=4, plane="vertical")
        np.testing.assert_allclose(ring[1].cameras[0].position, [0.0, 0.0, 7.0], atol=1e-12)
        assert all(abs(c.cameras[0].position[1]) < 1e-12 for c in ring)
        with pytest.raises(ValueError):
            generate_ring_candidates(np.zeros(3), plane="diagonal")

    def test_fixed(self):
        cams = [ring_camera(a) for a in (0, 90, 180)]
        cands = generate_fixed_candidates(cams, steps=2)
        assert [c.id for c in cands] == [0, 1, 2]
        assert cands[1].cameras == (cams[1], cams[1])
        assert cands[1].azimuth == pytest.approx(90.0)


class TestFlightCandidates:
    params = FlightModelParams(0.2, 0.5, 10.0)

    def test_nine_labels(self):
        state = DroneKinematicState([7.0, 0.0, 1.5])
        cands = generate_flight_candidates(state, self.params, [np.array([0.0, 0.0, 1.0])] * 3)
        assert [c.label for c in cands] == list(FLIGHT_DIRECTIONS)
        for c in cands:
            assert len(c.cameras) == 3
            if c.label != "center":
                assert np.linalg.norm(c.direction) == pytest.approx(1.0)

    def test_center_keeps_momentum(self):
        state = DroneKinematicState([7.0, 0.0, 1.5], [0.0, 2.0, 0.0], [0.0, 1.0, 0.0])
        cands = generate_flight_candidates(state, self.params, [np.array([0.0, 0.0, 1.0])] * 3)
        center = next(c for c in cands if c.label == "center")
        expected = predict_trajectory(state, np.zeros(3), self.params)
        np.testing.assert_allclose(center.positions, expected)

    def test_up_clamped(self):
        state = DroneKinematicState([7.0, 0.0, 3.45], [0.0, 0.0, 1.0])
        cands = generate_flight_candidates(state, self.params, [np.array([0.0, 0.0, 1.0])] * 3)
        up = next(c for c in cands if c.label == "up")
        assert np.max(up.positions[:, 2]) == pytest.approx(3.5)

    def test_uniform_ablation_ignores_momentum(self):
        state = DroneKinematicState([7.0, 0.0, 1.5], [0.0, 4.0, 0.0])
        cands = generate_flight_candidates(state, self.params, [np.array([0.0, 0.0, 1.0])] * 3,
                                           use_flight_model=False, uniform_step=0.5)
        center = next(c for c in cands if c.label == "center")
        np.testing.assert_allclose(center.positions, [[7.0, 0.0, 1.5]] * 3)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, 2 * np.pi), st.floats(0.5, 3.0), st.sampled_from(list(FLIGHT_DIRECTIONS)[1:]))
    def test_goal_on_sphere(self, az, z, label):
        subject = np.array([0.0, 0.0, 1.0])
        pos = np.array([7 * np.cos(az), 7 * np.sin(az), z])
        d = flight_direction(pos, subject, label, radius=7.0, band=(0.25, 3.5), step_length=1.0)
        assert np.linalg.norm(d) == pytest.approx(1.0)
        if label in ("left", "right"):
            # tangential moves stay horizontal
            assert abs(d[2]) < 0.2

    def test_left_right_orbit_directions(self):
        pos = np.array([7.0, 0.0, 1.0])
        right = flight_direction(pos, np.array([0.0, 0.0, 1.0]), "right")
        left = flight_direction(pos, np.array([0.0, 0.0, 1.0]), "left")
        # seen from above, "right" orbits counter-clockwise
        assert right[1] > 0 and left[1] < 0


class TestBaselines:
    ring = generate_ring_candidates(np.zeros(3) + [0, 0, 1.0], count=18, height=1.5)

    def test_rotation_cycles(self):
        prev, seen = 16, []
        for _ in range(5):
            prev = baseline_policy("constant_rotation", self.ring, previous=prev, increment=1).id
            seen.append(prev)
        assert seen == [17, 0, 1, 2, 3]

    def test_rotation_reverse(self):
        assert baseline_policy("constant_rotation", self.ring, previous=0, increment=-1).id == 17

    def test_rotation_skips_invisible(self):
        visible = [c for c in self.ring if c.id != 5]
        assert baseline_policy("constant_rotation", visible, previous=4, increment=1).id == 6

    def test_constant_angle(self):
        assert baseline_policy("constant_angle", self.ring, bearing=41.0).id == 2
        assert baseline_policy("constant_angle", self.ring, bearing=355.0).id == 0

    def test_random_reproducible(self):
        picks = [baseline_policy("random", self.ring, rng=np.random.default_rng(5)).id for _ in range(3)]
        assert len(set(picks)) == 1

    def test_oracle(self):
        realized = {3: 0.2, 7: 0.1, 9: 0.3}
        assert baseline_policy("oracle", self.ring, realized=realized).id == 7
        with pytest.raises(NoVisibleCandidate):
            baseline_policy("oracle", self.ring, realized={})

    def test_flight_rotation_labels(self):
        cands = [CandidateView(i, (), label) for i, label in enumerate(FLIGHT_DIRECTIONS)]
        assert baseline_policy("constant_rotation", cands, increment=1).label == "right"
        assert baseline_policy("constant_rotation", cands, increment=-1).label == "left"

    def test_unknown(self):
        with pytest.raises(ValueError):
            baseline_policy("teleport", self.ring)
