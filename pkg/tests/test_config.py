import pytest

from dmr_rec.config import RunConfig, load_config, read_config_file, rng_for, write_config
from dmr_rec.errors import ConfigError


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("DMR_EPOCHS", "DMR_TAU", "DMR_SEED"):
        monkeypatch.delenv(name, raising=False)


def test_defaults():
    config = load_config()
    assert config == RunConfig()
    assert config.diversity_cutoffs == (10, 50, 100)
    assert config.sweep_settings == (5, 20, 50)


def test_precedence(tmp_path, monkeypatch):
    path = tmp_path / "run.env"
    path.write_text("epochs=7\ntau=0.3\n", encoding="utf-8")
    monkeypatch.setenv("DMR_EPOCHS", "3")
    monkeypatch.setenv("DMR_SEED", "9")
    config = load_config(str(path), {"tau": "0.4", "dim": None})
    assert config.epochs == 7
    assert config.seed == 9
    assert config.tau == 0.4
    assert config.dim == RunConfig.dim


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("epochs=2\nlearning_rat=0.1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="learning_rat"):
        read_config_file(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "nope.env"))


@pytest.mark.parametrize(
    "overrides",
    [
        {"tau": "1.5"},
        {"split_fraction": "1.0"},
        {"g": "3", "n_max": "5"},
        {"similarity": "cosine"},
        {"epochs": "two"},
        {"k": "1.5"},
        {"diversity_ns": "1,10"},
        {"sweep_neighbors": ""},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_config(None, overrides)


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)


def test_with_overrides_validates():
    config = RunConfig()
    assert config.with_overrides(epochs="5").epochs == 5
    with pytest.raises(ConfigError):
        config.with_overrides(tau=2.0)


def test_hash_and_round_trip(tmp_path):
    config = RunConfig(seed=5, tau=0.25)
    path = write_config(config, str(tmp_path))
    assert load_config(path) == config
    assert config.config_hash() == load_config(path).config_hash()
    assert config.config_hash() != RunConfig(seed=6, tau=0.25).config_hash()


def test_rng_streams():
    a = rng_for(42, "shuffle:0").random(5)
    assert (a == rng_for(42, "shuffle:0").random(5)).all()
    assert not (a == rng_for(42, "shuffle:1").random(5)).all()
    assert not (a == rng_for(43, "shuffle:0").random(5)).all()
