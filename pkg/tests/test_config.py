import pytest

from pnal_lab.config import ConfigError, ExperimentConfig, desk_config


def test_scan_defaults():
    c = ExperimentConfig()
    t = c.training
    assert (t.q, t.gamma, t.epochs_total, t.e_warmup, t.e_clean) == (4, 4.0, 30, 5, 25)
    assert (t.block_size, t.stride, t.sample_n) == (1.0, 0.5, 4096)
    assert c.clustering.eps == 0.018


def test_method_schedules():
    c = desk_config()
    assert c.with_overrides(method="pnal").train_config().e_warmup == 5
    for m in ("ce", "gce", "sce"):
        cfg = c.with_overrides(method=m)
        assert not cfg.train_config().pnal_enabled
        assert cfg.loss_kind().name == (m if m != "ce" else "ce")
    assert c.loss_kind().name == "ce"


def test_yaml_round_trip(tmp_path):
    c = desk_config(seed=7, method="sce")
    c.dump(tmp_path / "c.yaml")
    assert ExperimentConfig.load(tmp_path / "c.yaml") == c


def test_partial_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 3\nnoise: {kind: asymmetric, tau: 0.6, tau_pair: 0.4, pairs: [[3, 4]]}\n")
    c = ExperimentConfig.load(p)
    assert c.seed == 3 and c.noise.pairs == ((3, 4),) and c.training.q == 4


@pytest.mark.parametrize("raw", [
    {"bogus": 1}, {"training": {"nope": 1}}, {"method": "mixup"}, {"seed": -1},
    {"training": {"q": 6}}, {"noise": {"tau": 2}}, {"clustering": {"eps": 0}},
])
def test_invalid(raw):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_derived_seeds_differ():
    c = desk_config(seed=1)
    assert c.noise_config().seed != c.train_config().seed
    assert c.noise_config().seed != desk_config(seed=2).noise_config().seed
