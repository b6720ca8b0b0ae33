import json

import pytest

from algnet.config import ConfigError, TrainConfig, Variant


class TestVariant:
    def test_layouts(self):
        assert (Variant.ALGNET.sequence, Variant.ALGNET.attention, Variant.ALGNET.graph) == ("gru", True, "lgc")
        assert (Variant.RNN_GCN.sequence, Variant.RNN_GCN.attention, Variant.RNN_GCN.graph) == ("gru", False, "gcn")
        assert Variant.A_LGNET_NO_RNN.sequence is None and Variant.A_LGNET_NO_RNN.attention
        assert Variant.RNN_GCN.label == "RNN-GCN (GAMENet)"
        assert len(Variant) == 10
        assert len({(v.sequence, v.attention, v.graph) for v in Variant}) == 10

    def test_parse(self):
        assert Variant.parse("rnn-lgnet") is Variant.RNN_LGNET
        with pytest.raises(ConfigError, match="unknown variant"):
            Variant.parse("TRANSFORMER")


class TestTrainConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.dim, c.heads, c.lr, c.epochs, c.alpha, c.beta) == (64, 8, 2e-4, 60, 0.5, 0.5)
        assert c.model_dim == 512

    @pytest.mark.parametrize("bad", [
        dict(epochs=0), dict(theta0=0.5, theta1=0.4), dict(theta0=-0.1, theta1=1.1), dict(lr=0),
        dict(split=(0.5, 0.5, 0.0)), dict(threshold=1.0), dict(pooling="max"), dict(step_per="epoch"),
        dict(history_source="oracle"), dict(variant="nope"), dict(w_ddi=-1), dict(heads=0),
    ])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)

    def test_json_round_trip(self, tmp_path):
        c = TrainConfig(seed=3, variant="a-gcn", split=[0.5, 0.25, 0.25])
        path = tmp_path / "c.json"
        path.write_text(json.dumps(c.to_json()))
        assert TrainConfig.load(path) == c
        assert c.variant == "A_GCN"

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown config field"):
            TrainConfig.from_json({"epochs": 3, "dropout": 0.1})

    def test_unreadable(self, tmp_path):
        (tmp_path / "c.json").write_text("{oops")
        with pytest.raises(ConfigError):
            TrainConfig.load(tmp_path / "c.json")

    def test_updated_skips_none(self):
        c = TrainConfig().updated(epochs=5, lr=None)
        assert c.epochs == 5 and c.lr == 2e-4
        with pytest.raises(ConfigError):
            TrainConfig().updated(epochs=0)
