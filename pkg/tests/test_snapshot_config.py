import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amdl import snapshot
from amdl.config import KEYS, load_config, parse_config
from amdl.errors import ConfigError, FormatError

any_float = st.floats(allow_nan=True, allow_infinity=True, allow_subnormal=True, width=64)


class TestSnapshot:
    def test_layout(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        data = snapshot.dumps(m, "orthogonal")
        assert data.startswith(b"DICTSNAP1\nrows=3\ncols=2\nkind=orthogonal\n\n")
        body = data[len(b"DICTSNAP1\nrows=3\ncols=2\nkind=orthogonal\n\n") :]
        np.testing.assert_array_equal(np.frombuffer(body, "<f8"), [1, 2, 3, 4, 5, 6])

    def test_100_random_with_subnormals_and_negative_zero(self):
        rng = np.random.default_rng(0)
        for i in range(100):
            m = rng.standard_normal((1 + i % 7, 1 + i % 5))
            m.flat[0] = -0.0
            m.flat[-1] = 5e-324
            back, kind = snapshot.loads(snapshot.dumps(m))
            assert back.tobytes() == m.tobytes() and kind == "general"

    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=any_float))
    def test_bitwise_property(self, m):
        back, _ = snapshot.loads(snapshot.dumps(m))
        assert back.tobytes() == m.tobytes()

    def test_file_roundtrip(self, tmp_path):
        m = np.eye(3)
        snapshot.write_snapshot(tmp_path / "d.snap", m, "orthogonal")
        back, kind = snapshot.read_snapshot(tmp_path / "d.snap")
        assert kind == "orthogonal" and back.tobytes() == m.tobytes()

    @pytest.mark.parametrize(
        "data",
        [
            b"NOPE",
            b"DICTSNAP1\nrows=1\ncols=1\nkind=general",
            b"DICTSNAP1\nrows=1\ncols=1\n\n" + bytes(8),
            b"DICTSNAP1\nrows=1\ncols=1\nkind=weird\n\n" + bytes(8),
            b"DICTSNAP1\nrows=1\ncols=2\nkind=general\n\n" + bytes(8),
            b"DICTSNAP1\nrows=x\ncols=1\nkind=general\n\n" + bytes(8),
        ],
    )
    def test_malformed(self, data):
        with pytest.raises(FormatError):
            snapshot.loads(data)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            snapshot.dumps(np.ones(3))
        with pytest.raises(ValueError):
            snapshot.dumps(np.ones((2, 2)), "weird")


class TestConfig:
    def test_parse(self):
        cfg = parse_config("# comment\nn = 5\ntheta = 0.3   # inline\nsolver = odl+warmup\nuse_truth = no\n\n")
        assert cfg.get("n") == 5 and cfg.get("theta") == 0.3 and cfg.get("solver") == "odl+warmup"
        assert cfg.get("use_truth") is False
        assert "p" not in cfg and cfg.get("p", 7) == 7

    @pytest.mark.parametrize(
        "text, where",
        [
            ("n = 5\nthetta = 0.1\n", ":2:"),
            ("n = 5\nn = 6\n", ":2:"),
            ("n = five\n", ":1:"),
            ("just words\n", ":1:"),
            ("solver = sgd\n", ":1:"),
        ],
    )
    def test_errors_carry_line(self, text, where):
        with pytest.raises(ConfigError, match=where):
            parse_config(text, "exp.cfg")

    def test_require(self):
        cfg = parse_config("n = 1\n", "x.cfg")
        with pytest.raises(ConfigError, match="p, theta"):
            cfg.require("n", "p", "theta")

    def test_unknown_key_lookup(self):
        with pytest.raises(KeyError):
            parse_config("").get("nope")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_every_key_parses_a_sample(self):
        samples = {int: "3", float: "0.5", str: "x"}
        for key, parser in KEYS.items():
            if parser in samples:
                parser(samples[parser])
