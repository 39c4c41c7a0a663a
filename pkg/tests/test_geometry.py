import numpy as np
import pytest

from chartblender.errors import BehindCamera, NonPositiveDepth, PixelOutOfBounds
from chartblender.geometry import (
    CameraTrajectory,
    Intrinsics,
    RigidTransform,
    back_project,
    camera_to_world,
    chain_global_poses,
    compose,
    default_intrinsics,
    invert,
    project,
    random_rotation,
)

K = Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)


def _mat(t: RigidTransform) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = t.rotation
    m[:3, 3] = t.translation
    return m


def _random_transform(rng) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-2, 2, size=3))


def test_back_project_principal_point():
    p = back_project((50.0, 50.0), 3.0, K)
    np.testing.assert_allclose(p, [0.0, 0.0, 3.0], atol=1e-12)


def test_back_project_hand_computed():
    # d * K^-1 [u, v, 1]^T evaluated by hand: 2 * (150-50)/100 = 2.0
    p = back_project((150.0, 50.0), 2.0, Intrinsics(100, 100, 50, 50, 200, 101))
    np.testing.assert_allclose(p, [2.0, 0.0, 2.0], atol=1e-12)


def test_back_project_errors():
    with pytest.raises(NonPositiveDepth):
        back_project((50, 50), 0.0, K)
    with pytest.raises(NonPositiveDepth):
        back_project((50, 50), -1.0, K)
    with pytest.raises(PixelOutOfBounds):
        back_project((500, 50), 1.0, K)


def test_project_optical_axis():
    np.testing.assert_allclose(project((0, 0, 5.0), K), [50.0, 50.0], atol=1e-12)


def test_project_inverse_of_back_project_example():
    k = Intrinsics(100, 100, 50, 50, 200, 101)
    np.testing.assert_allclose(project((2.0, 0.0, 2.0), k), [150.0, 50.0], atol=1e-12)


def test_project_behind_camera():
    with pytest.raises(BehindCamera):
        project((0, 0, -1.0), K)


def test_round_trip_identity_on_grid():
    # project(back_project(p, d)) = p within 1e-9 px for depths in [0.1, 100]
    us, vs = np.meshgrid(np.arange(0, 101, 10), np.arange(0, 101, 10))
    for d in (0.1, 0.5, 2.0, 25.0, 100.0):
        for u, v in zip(us.ravel(), vs.ravel()):
            p = project(back_project((float(u), float(v)), d, K), K)
            assert abs(p[0] - u) < 1e-9 and abs(p[1] - v) < 1e-9


def test_compose_identity():
    rng = np.random.default_rng(0)
    t = _random_transform(rng)
    c = compose(RigidTransform.identity(), t)
    np.testing.assert_allclose(_mat(c), _mat(t), atol=1e-15)


def test_compose_two_translations():
    a = RigidTransform(np.eye(3), [1, 0, 0])
    b = RigidTransform(np.eye(3), [0, 1, 0])
    c = compose(a, b)
    # 4x4 homogeneous matrix-product oracle
    np.testing.assert_allclose(_mat(c), _mat(a) @ _mat(b), atol=1e-15)
    np.testing.assert_allclose(c.translation, [1, 1, 0], atol=1e-15)


def test_invert_round_trip_randomized():
    rng = np.random.default_rng(1)
    for _ in range(50):
        t = _random_transform(rng)
        ident = compose(invert(t), t)
        np.testing.assert_allclose(_mat(ident), np.eye(4), atol=1e-9)


def test_compose_associative():
    rng = np.random.default_rng(2)
    for _ in range(25):
        a, b, c = (_random_transform(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        np.testing.assert_allclose(_mat(left), _mat(right), atol=1e-9)


def test_orthonormality_after_long_chain():
    rng = np.random.default_rng(3)
    t = _random_transform(rng)
    acc = RigidTransform.identity()
    for _ in range(10_000):
        acc = compose(acc, t)
    r = acc.rotation
    assert abs(np.linalg.det(r) - 1.0) < 1e-6
    assert np.abs(r.T @ r - np.eye(3)).max() < 1e-6


def test_chain_identity_relatives():
    traj = chain_global_poses([RigidTransform.identity()] * 5)
    assert traj.frame_count == 6
    for pose in traj:
        assert pose.is_identity(atol=1e-12)


def test_chain_single_relative():
    rng = np.random.default_rng(4)
    t = _random_transform(rng)
    traj = chain_global_poses([t])
    np.testing.assert_allclose(_mat(traj[1]), _mat(t), atol=1e-15)


def test_chain_empty_gives_single_identity():
    traj = chain_global_poses([])
    assert traj.frame_count == 1
    assert traj[0].is_identity()


def test_chain_matches_dense_matrix_fold():
    rng = np.random.default_rng(5)
    relatives = [_random_transform(rng) for _ in range(5)]
    traj = chain_global_poses(relatives)
    # Dense oracle: M_n = T_{n-1->n} @ M_{n-1} as raw 4x4 products.
    m = np.eye(4)
    for n, rel in enumerate(relatives, start=1):
        m = _mat(rel) @ m
        np.testing.assert_allclose(_mat(traj[n]), m, atol=1e-9)


def test_camera_to_world_identity():
    p = camera_to_world((1.0, 2.0, 3.0), RigidTransform.identity())
    np.testing.assert_allclose(p, [1, 2, 3], atol=1e-15)


def test_camera_to_world_pure_translation():
    m = RigidTransform(np.eye(3), [0.5, -0.25, 1.0])
    p = camera_to_world((1.0, 1.0, 1.0), m)
    np.testing.assert_allclose(p, [0.5, 1.25, 0.0], atol=1e-15)


def test_camera_world_round_trip():
    rng = np.random.default_rng(6)
    for _ in range(20):
        m = _random_transform(rng)
        p = rng.uniform(-5, 5, size=3)
        back = m.apply(camera_to_world(p, m))
        np.testing.assert_allclose(back, p, atol=1e-9)


def test_quaternion_round_trip():
    rng = np.random.default_rng(7)
    for _ in range(100):
        r = random_rotation(rng)
        t = RigidTransform(r, [0, 0, 0])
        back = RigidTransform.from_quaternion(t.to_quaternion(), [0, 0, 0])
        np.testing.assert_allclose(back.rotation, r, atol=1e-12)


def test_trajectory_csv_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    traj = chain_global_poses([_random_transform(rng) for _ in range(4)])
    path = tmp_path / "poses.csv"
    traj.save_csv(path)
    loaded = CameraTrajectory.load_csv(path)
    assert loaded.frame_count == traj.frame_count
    for a, b in zip(traj, loaded):
        np.testing.assert_allclose(_mat(a), _mat(b), atol=1e-12)


def test_trajectory_requires_identity_first_pose():
    rng = np.random.default_rng(9)
    with pytest.raises(ValueError):
        CameraTrajectory([_random_transform(rng)])


def test_intrinsics_json_round_trip(tmp_path):
    k = default_intrinsics(1920, 1080)
    assert k.fx == pytest.approx(0.9 * 1920)
    path = tmp_path / "intrinsics.json"
    k.save(path)
    assert Intrinsics.load(path) == k


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(fx=-1, fy=1, cx=0, cy=0, width=10, height=10)
    with pytest.raises(ValueError):
        Intrinsics(fx=1, fy=1, cx=20, cy=0, width=10, height=10)
