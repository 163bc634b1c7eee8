"""Test configuration loading, overrides, seeds and the thread cap."""

import json
import os

import pytest

from otlex.config import derive_seed, load_config, load_settings, merge, resolve_config
from otlex.errors import ConfigError
from otlex.models import LoadSettings, Strategy, StrategyConfig
from otlex.threads import BLAS_THREAD_VARS, THREADS_ENV, apply_thread_env, thread_count


class TestResolveConfig:
    """Test config file loading, merging and validation."""

    def test_defaults(self):
        cfg = resolve_config()

        assert cfg == StrategyConfig()
        assert cfg.strategy is Strategy.CSS
        assert cfg.unsup.epsilon == 0.05

    def test_file_and_overrides_merge(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"epochs": 3, "sup": {"k": 5, "batch_size": 10}}))

        cfg = resolve_config(path, {"sup": {"batch_size": 20}, "seed": 4})

        assert cfg.epochs == 3
        assert cfg.sup.k == 5
        assert cfg.sup.batch_size == 20
        assert cfg.seed == 4

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"sup": {"momentum": 0.9}}))

        with pytest.raises(ConfigError, match="sup.momentum"):
            resolve_config(path)

    def test_inapplicable_ablation(self):
        with pytest.raises(ConfigError, match="inapplicable"):
            resolve_config(overrides={"strategy": "unsup_only", "ablate_blu": True})

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{epochs: 3")

        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(path)

    def test_top_level_must_be_object(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("[1, 2]")

        with pytest.raises(ConfigError, match="object"):
            load_config(path)

    def test_manifest_config_is_reused(self, tmp_path):
        path = tmp_path / "manifest.json"
        manifest = {
            "config": StrategyConfig(epochs=7).model_dump(mode="json"),
            "input_digests": {},
            "seed": 0,
            "version": "0.1.0",
        }
        path.write_text(json.dumps(manifest))

        assert resolve_config(path).epochs == 7

    def test_merge_leaves_inputs_untouched(self):
        base = {"sup": {"k": 1}}

        merged = merge(base, {"sup": {"lr": 2}})

        assert merged == {"sup": {"k": 1, "lr": 2}}
        assert base == {"sup": {"k": 1}}


class TestLoadSettings:
    """Test loading settings restored from run manifests."""

    def test_manifest_settings_are_restored(self, tmp_path):
        path = tmp_path / "manifest.json"
        manifest = {
            "config": StrategyConfig().model_dump(mode="json"),
            "load": {"max_vocab": 300, "normalize": True, "center": True, "save_lexicon": True},
            "input_digests": {},
            "seed": 0,
            "version": "0.1.0",
        }
        path.write_text(json.dumps(manifest))

        settings = load_settings(path)

        assert settings == LoadSettings(max_vocab=300, center=True, save_lexicon=True)

    def test_plain_config_gives_defaults(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"epochs": 2}))

        assert load_settings(path) == LoadSettings()
        assert load_settings(None) == LoadSettings()

    def test_manifest_without_load_section_gives_defaults(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"config": {}, "input_digests": {}, "seed": 0, "version": "0.1.0"}))

        assert load_settings(path).max_vocab == 200_000

    def test_invalid_load_section(self, tmp_path):
        path = tmp_path / "manifest.json"
        manifest = {"config": {}, "load": {"max_vocab": 0}, "input_digests": {}, "seed": 0, "version": "0.1.0"}
        path.write_text(json.dumps(manifest))

        with pytest.raises(ConfigError, match="load section"):
            load_settings(path)

class TestDeriveSeed:
    """Test per-component seed derivation."""

    def test_deterministic(self):
        assert derive_seed(0, "sup", 1) == derive_seed(0, "sup", 1)

    def test_distinct_streams(self):
        seeds = {derive_seed(0, "sup", 0), derive_seed(0, "unsup", 0), derive_seed(0, "sup", 1), derive_seed(1, "sup", 0)}

        assert len(seeds) == 4


class TestThreads:
    """Test the BLAS thread cap environment handling."""

    def test_unset(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV, raising=False)

        assert thread_count() is None

    def test_sequential_mode(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "0")
        for var in BLAS_THREAD_VARS:
            monkeypatch.delenv(var, raising=False)

        assert apply_thread_env() == 0
        assert all(os.environ[var] == "1" for var in BLAS_THREAD_VARS)

    @pytest.mark.parametrize("raw", ["abc", "-1"])
    def test_invalid_values(self, monkeypatch, raw):
        monkeypatch.setenv(THREADS_ENV, raw)

        with pytest.raises(ConfigError, match=THREADS_ENV):
            thread_count()
