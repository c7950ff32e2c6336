import pytest

from qcofr.config import ConfigError, RunConfig, load_config


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_follow_the_training_table():
    cfg = RunConfig.from_dict({"env": {}})
    t = cfg.trainer
    assert (t.gamma, t.lr, t.batch_size, t.buffer_size, t.target_update_interval) == (0.99, 5e-4, 32, 5000, 200)
    assert (t.test_episodes, t.epsilon_start, t.epsilon_end, t.epsilon_anneal) == (32, 1.0, 0.05, 50000)
    assert (cfg.mixer.n_ladders, cfg.mixer.depth, cfg.vib.latent_dim, cfg.vib.beta) == (4, 2, 32, 1e-3)


def test_load_parses_json_literals_and_overrides(tmp_path):
    p = write(tmp_path, """
[env]
kind = "lbf"
agent_levels = [1, 2]
food_levels = [3]

[vib]
enabled = false

[trainer]
lr = 0.001
""")
    cfg = load_config(p, ["trainer.seed=7", "mixer.variant=cfn-c", "env.width=6"])
    assert cfg.env.agent_levels == [1, 2] and cfg.vib.enabled is False
    assert cfg.trainer.lr == 0.001 and cfg.trainer.seed == 7
    assert cfg.mixer.variant == "cfn-c" and cfg.env.width == 6


def test_ini_round_trip(tmp_path):
    cfg = RunConfig.from_dict({"env": {"kind": "matrix"}, "trainer": {"seed": 11}})
    cfg.save(tmp_path / "c.ini")
    assert load_config(tmp_path / "c.ini") == cfg


@pytest.mark.parametrize(
    "data,match",
    [
        ({}, r"missing required section \[env\]"),
        ({"env": {}, "bogus": {}}, "unknown section"),
        ({"env": {"colour": 1}}, r"\[env\] unknown key\(s\): colour"),
        ({"env": {"width": "wide"}}, "env.width: expected int"),
        ({"env": {"width": 2.5}}, "env.width: expected int"),
        ({"env": {}, "vib": {"enabled": 1}}, "vib.enabled: expected bool"),
        ({"env": {}, "trainer": {"gamma": 1.5}}, "trainer.gamma"),
        ({"env": {}, "mixer": {"delta": 0}}, "mixer.delta"),
        ({"env": {}, "mixer": {"kind": "qmix"}}, "mixer.kind"),
        ({"env": {"kind": "grid"}}, "env.kind"),
        ({"env": {}, "trainer": {"batch_size": 0}}, "trainer.batch_size"),
    ],
)
def test_validation_names_the_field(data, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_dict(data)


def test_bad_overrides(tmp_path):
    p = write(tmp_path, "[env]\n")
    with pytest.raises(ConfigError, match="key=value"):
        load_config(p, ["trainer.seed"])
    with pytest.raises(ConfigError, match="section.field"):
        load_config(p, ["seed=3"])
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(p, ["trainer.sead=3"])


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.ini")
    with pytest.raises(ConfigError, match="could not parse"):
        load_config(write(tmp_path, "no section header\n"))
