import math

import numpy as np
import pytest

import softfly


@pytest.fixture(scope="module")
def cfg():
    return softfly.config({"episode": {"horizon": 400}, "eval": {"horizon": 400, "episodes": 4}})


def test_config_roundtrip_and_unknown_keys(cfg):
    again = softfly.Config.from_json(cfg.to_json())
    assert again.hash() == cfg.hash()
    assert len(cfg.hash()) == 16
    with pytest.raises(ValueError):
        softfly.config({"reward": {"k_nope": 1.0}})


def test_hover_is_a_fixed_point():
    robot = softfly.RobotParams()
    s = softfly.State()
    for _ in range(100):
        s = softfly.step_dynamics(s, robot.nominal_action(), softfly.Disturbance(), robot)
    assert np.abs(s.to_array() - softfly.State().to_array()).max() <= 1e-12


def test_quaternion_euler_roundtrip():
    roll, pitch, yaw = softfly.quat_to_euler(softfly.euler_to_quat(0.1, -0.2, 0.3))
    assert math.isclose(roll, 0.1, abs_tol=1e-12)
    assert math.isclose(pitch, -0.2, abs_tol=1e-12)
    assert math.isclose(yaw, 0.3, abs_tol=1e-12)


def test_env_step_and_delay(cfg):
    env = softfly.DelayedEnv(cfg)
    env.reset_seeded(cfg, 5)
    d = env.domain.delay_steps
    assert 15 <= d <= 20
    nominal = env.domain.robot.nominal_action()  # the queue starts at hover of the drawn robot
    kick = softfly.Action(nominal.thrust * 1.1)
    first = env.step(kick)
    assert math.isclose(first.executed.thrust, nominal.thrust, rel_tol=1e-12)
    for _ in range(d - 1):
        env.step(nominal)
    assert math.isclose(env.step(nominal).executed.thrust, kick.thrust, rel_tol=1e-12)
    assert env.steps_taken == d + 1


def test_demos_bc_and_evaluate(cfg, tmp_path):
    ds = softfly.generate_demos(cfg, pairs=1500, variant="rematch", seed=3)
    assert len(ds) == 1500
    assert ds.states().shape == (1500, 13)
    assert ds.actions().shape == (1500, 3)
    path = str(tmp_path / "demos.bin")
    ds.save(path)
    assert len(softfly.DemoDataset.load(path)) == 1500

    policy = softfly.bc_train(softfly.config({"bc": {"epochs": 3}}), ds)
    assert policy.stage == "bc"
    a = policy.act(softfly.State())
    assert math.isclose(a.thrust, cfg.robot.nominal_action().thrust, rel_tol=0.2)
    ck = str(tmp_path / "bc.ckpt")
    policy.save(ck)
    assert softfly.Policy.load(ck).hash() == policy.hash()

    rep = softfly.evaluate(cfg, policy)
    assert len(rep["rewards"]) == 4
    assert rep["median"] <= 0.0
    expert = softfly.evaluate(cfg, "expert")
    assert expert["failures"] == 0


def test_rollout_shapes(cfg):
    tr = softfly.rollout(cfg, "expert", seed=11)
    assert tr["states"].shape == (401, 13)
    assert tr["actions"].shape == (400, 3)
    assert len(tr["rewards"]) == 400


def test_library_checks_pass():
    assert all(c["pass"] for c in softfly.physics_check(softfly.Config()))
    assert all(c["pass"] for c in softfly.rematch_check())
    assert all(c["pass"] for c in softfly.gradient_check(2))


def test_bad_variant_rejected(cfg):
    with pytest.raises(ValueError):
        softfly.generate_demos(cfg, pairs=10, variant="nope")
