import pytest

from screwblur.config import ConfigError, RunConfig, TrainConfig, dump_config, from_dict, load_config, with_overrides


def test_defaults():
    cfg = RunConfig()
    assert cfg.train.iterations == 4000 and cfg.train.n_poses == 9
    assert cfg.loss.lambda_c == 0.3
    assert cfg.train.flags == (True, True, True)
    assert cfg.train.activation_iteration() == 300


def test_activation_scales_with_schedule():
    assert TrainConfig(iterations=40000).activation_iteration() == 3000
    assert TrainConfig(iterations=8, compositor_start=2).activation_iteration() == 2
    assert TrainConfig(iterations=1).activation_iteration() == 0


@pytest.mark.parametrize(
    "values",
    [
        {"train": {"iterations": 0}},
        {"train": {"mode": "deform"}},
        {"train": {"iterations": 10, "compositor_start": 10}},
        {"train": {"precision": "float16"}},
        {"train": {"bogus": 1}},
        {"solver": {"method": "midpoint"}},
        {"loss": {"lambda_c": 2.0}},
        {"render": {"backend": "gpu"}},
        {"data": {"generate": {"blur": "zoom"}}},
        {"train": 5},
    ],
)
def test_invalid(values):
    with pytest.raises(ConfigError):
        from_dict(values)


def test_yaml_roundtrip_and_digest(tmp_path):
    cfg = with_overrides(RunConfig(), {"train.iterations": 12, "solver.rtol": 1e-4, "data.manifest": "x.yaml"})
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg
    assert back.digest() == cfg.digest()
    assert with_overrides(cfg, {"data.manifest": "y"}).digest() == cfg.digest()
    assert with_overrides(cfg, {"train.seed": 1}).digest() != cfg.digest()


def test_override_errors(tmp_path):
    with pytest.raises(ConfigError):
        with_overrides(RunConfig(), {"train.nope": 1})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("train: [")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_example_config_loads():
    from importlib import resources

    path = resources.files("screwblur") / "configs" / "toy.yaml"
    cfg = load_config(str(path))
    assert cfg.train.iterations == 4000
