"""Checkpoint round-trip, corruption and space-compatibility tests."""

import json

import numpy as np
import pytest

from stepnet.env import Box, Discrete
from stepnet.errors import CorruptCheckpoint
from stepnet.trainer import (
    FORMAT_VERSION,
    Mlp,
    PolicyCheckpoint,
    load_checkpoint,
    require_spaces,
    save_checkpoint,
)


def make_ckpt(seed=0):
    net = Mlp(4, 2, hidden=(8,), rng=np.random.default_rng(seed))
    return PolicyCheckpoint(
        observation_space={"type": "box", "low": [0.0] * 4, "high": [1.0] * 4},
        action_space={"type": "discrete", "n": 2},
        action_grid=11,
        hidden=(8,),
        parameters=net.copy_parameters(),
        trainer_config={"gamma": 0.99},
        config_hash="cafe",
        train_steps=7,
        env_steps=21,
    )


class TestRoundTrip:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        save_checkpoint(first, make_ckpt())
        save_checkpoint(second, load_checkpoint(first))
        assert first.read_bytes() == second.read_bytes()

    def test_greedy_behaviour_survives_round_trip(self, tmp_path):
        ckpt = make_ckpt(seed=3)
        path = tmp_path / "p.json"
        save_checkpoint(path, ckpt)
        original = ckpt.build_network()
        restored = load_checkpoint(path).build_network()
        rng = np.random.default_rng(0)
        for _ in range(100):
            obs = rng.normal(size=4)
            assert int(np.argmax(original.q_values(obs))) == int(
                np.argmax(restored.q_values(obs))
            )

    def test_counters_and_metadata_survive(self, tmp_path):
        path = tmp_path / "p.json"
        save_checkpoint(path, make_ckpt())
        loaded = load_checkpoint(path)
        assert loaded.train_steps == 7
        assert loaded.env_steps == 21
        assert loaded.config_hash == "cafe"
        assert loaded.action_grid == 11
        assert loaded.hidden == (8,)

    def test_missing_file_raises_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nope.json")


class TestCorruption:
    def test_garbage_bytes(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_bytes(b"\x00\x01 not json")
        with pytest.raises(CorruptCheckpoint, match="not a readable"):
            load_checkpoint(path)

    def test_non_object_top_level(self, tmp_path):
        path = tmp_path / "p.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(CorruptCheckpoint, match="JSON object"):
            load_checkpoint(path)

    def test_missing_key(self, tmp_path):
        path = tmp_path / "p.json"
        save_checkpoint(path, make_ckpt())
        doc = json.loads(path.read_text())
        del doc["parameters"]
        path.write_text(json.dumps(doc))
        with pytest.raises(CorruptCheckpoint, match="missing keys.*parameters"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "p.json"
        save_checkpoint(path, make_ckpt())
        doc = json.loads(path.read_text())
        doc["format_version"] = FORMAT_VERSION + 1
        path.write_text(json.dumps(doc))
        with pytest.raises(CorruptCheckpoint, match="format version"):
            load_checkpoint(path)

    def test_non_finite_parameters(self, tmp_path):
        path = tmp_path / "p.json"
        save_checkpoint(path, make_ckpt())
        doc = json.loads(path.read_text())
        doc["parameters"][0][0][0] = float("nan")
        path.write_text(json.dumps(doc))
        with pytest.raises(CorruptCheckpoint, match="non-finite"):
            load_checkpoint(path)

    def test_inconsistent_parameter_shapes(self, tmp_path):
        path = tmp_path / "p.json"
        save_checkpoint(path, make_ckpt())
        doc = json.loads(path.read_text())
        doc["parameters"] = doc["parameters"][:2]
        path.write_text(json.dumps(doc))
        with pytest.raises(CorruptCheckpoint, match="shapes inconsistent"):
            load_checkpoint(path)


class TestSpaceCompatibility:
    def test_matching_spaces_pass(self):
        ckpt = make_ckpt()
        require_spaces(ckpt, Box((0.0,) * 4, (1.0,) * 4), Discrete(2))

    def test_observation_space_mismatch(self):
        ckpt = make_ckpt()
        with pytest.raises(CorruptCheckpoint, match="observation space"):
            require_spaces(ckpt, Box((0.0,) * 3, (1.0,) * 3), Discrete(2))

    def test_action_space_mismatch(self):
        ckpt = make_ckpt()
        with pytest.raises(CorruptCheckpoint, match="action space"):
            require_spaces(ckpt, Box((0.0,) * 4, (1.0,) * 4), Discrete(3))
