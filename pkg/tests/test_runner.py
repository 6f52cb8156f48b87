import numpy as np
import pytest

from vipcop.config import ConfigError, load_config
from vipcop.runner import apply_setting, build_evaluator, prepare_tables
from vipcop.service.schemas import ExperimentConfig
from vipcop.tables import SplitSpec, load_csv, split

from test_service import base_config, write_dataset


class TestPrepareTables:
    def test_transform_touches_training_split_only(self, tmp_path):
        dataset = write_dataset(tmp_path / "d.csv", n=120, d=4, seed=3)
        config = ExperimentConfig(
            **base_config(
                tmp_path,
                dataset=str(dataset),
                setting="dn_s1",
                noise={"drop_fraction": 0.5},
            )
        )
        train, val, test = prepare_tables(config)

        table = load_csv(dataset, "label")
        spec = SplitSpec(0.7, 0.15, 0.15, seed=config.seed, stratified=True)
        raw_train, raw_val, raw_test = split(table, spec)
        assert np.array_equal(val.x, raw_val.x)
        assert np.array_equal(test.x, raw_test.x)
        assert train.injected_rows is not None
        assert train.n_rows == raw_train.n_rows  # shape preserved by noising
        assert raw_val.injected_rows is None

    @pytest.mark.parametrize(
        "setting,section,expect",
        [
            ("da_sample", {"augment": {"kind": "sample_affine", "target_n": 200}}, "rows"),
            ("da_feature", {"augment": {"kind": "feature_projection", "target_d": 7}}, "cols"),
            ("dn_s2", {"noise": {"drop_fraction": 0.4}}, "rows"),
            ("dn_f", {"noise": {"drop_fraction": 0.5}}, "cols"),
        ],
    )
    def test_settings_map_to_their_transforms(self, tmp_path, setting, section, expect):
        dataset = write_dataset(tmp_path / "d.csv", n=120, d=4, seed=1)
        config = ExperimentConfig(
            **base_config(tmp_path, dataset=str(dataset), setting=setting, **section)
        )
        train, _, _ = prepare_tables(config)
        if expect == "rows":
            assert train.injected_rows is not None and train.injected_rows.any()
        else:
            assert train.injected_cols is not None and train.injected_cols.any()

    def test_original_setting_is_identity(self, tmp_path):
        dataset = write_dataset(tmp_path / "d.csv", n=80, d=4, seed=2)
        config = ExperimentConfig(**base_config(tmp_path, dataset=str(dataset)))
        train, _, _ = prepare_tables(config)
        assert train.injected_rows is None and train.injected_cols is None
        assert apply_setting(train, config) is train


class TestConfigLoading:
    def test_overrides_beat_file_values(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('dataset = "a.csv"\nseed = 1\n[engine]\nrounds = 9\n')
        config = load_config(path, {"seed": 5, "engine": {"rounds": 3}})
        assert config.seed == 5
        assert config.engine.rounds == 3

    def test_none_overrides_ignored(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('dataset = "a.csv"\nseed = 7\n')
        config = load_config(path, {"seed": None, "engine": {"rounds": None}})
        assert config.seed == 7
        assert config.engine.rounds == 100

    def test_error_names_offending_field(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('dataset = "a.csv"\nsetting = "da_sample"\n')
        with pytest.raises(ConfigError, match="augment"):
            load_config(path)

    def test_broken_toml_rejected(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("dataset = [unclosed\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")


class TestBuildEvaluator:
    def test_oracle_from_config(self, tmp_path):
        from vipcop.evaluators import AdditiveOracle

        config = ExperimentConfig(
            **base_config(
                tmp_path,
                evaluator={
                    "kind": "oracle",
                    "base": 0.6,
                    "sample_weights": [0.1, -0.1, 0.0],
                },
            )
        )
        from vipcop.runner import build_budget

        evaluator = build_evaluator(config, build_budget(config))
        assert isinstance(evaluator, AdditiveOracle)
        assert evaluator.base == 0.6

    def test_capacity_follows_budget_toggle(self, tmp_path):
        from vipcop.runner import build_budget

        config = ExperimentConfig(**base_config(tmp_path))
        assert build_evaluator(config, build_budget(config)).capacity is not None
        config = ExperimentConfig(
            **base_config(tmp_path, evaluator={"kind": "knn", "enforce_capacity": False})
        )
        assert build_evaluator(config, build_budget(config)).capacity is None
