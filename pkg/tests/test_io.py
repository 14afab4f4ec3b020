import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from deepmf import io
from deepmf.ensembles import DeepNetConfig, sample_deep_net
from deepmf.meanfield import LayerMoments
from deepmf.numerics import RngStream
from deepmf.rbm import random_rbm


@settings(deadline=None, max_examples=50)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_vector_round_trip_exact(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("v") / "v.csv"
    io.write_vector(path, xs)
    back = io.read_vector(path)
    assert [x.hex() for x in map(float, back)] == [float(x).hex() for x in xs]


def test_fmt():
    assert io.fmt(True) == "true"
    assert io.fmt(np.int64(3)) == "3"
    assert float(io.fmt(math.pi)) == math.pi
    assert io.fmt(0.1) == "0.1"


def test_rows_are_rfc4180(tmp_path):
    path = io.write_rows(tmp_path / "t.csv", ["a", "b"], [[1, 0.5], ["x,y", 2]])
    raw = path.read_bytes()
    assert raw.startswith(b"a,b\r\n")
    assert b'"x,y"' in raw
    header, rows = io.read_rows(path)
    assert header == ["a", "b"] and rows[1][0] == "x,y"


def test_network_round_trip(tmp_path):
    net = sample_deep_net(DeepNetConfig(6, 3), RngStream(0))
    io.save_network(tmp_path / "net", net, {"seed": 0})
    back, header = io.load_network(tmp_path / "net")
    assert header == {"seed": 0}
    for a, b in zip(net, back):
        np.testing.assert_array_equal(a.w, b.w)
        np.testing.assert_array_equal(a.b, b.b)


def test_moments_round_trip(tmp_path):
    gen = np.random.default_rng(1)
    mos = [LayerMoments(gen.normal(size=4), np.eye(4) * gen.random()) for _ in range(3)]
    io.save_moments(tmp_path / "mo", mos, {"quad_order": 81})
    back, header = io.load_moments(tmp_path / "mo")
    assert header["quad_order"] == 81
    for a, b in zip(mos, back):
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.cov, b.cov)


def test_rbm_round_trip(tmp_path):
    model = random_rbm(5, 3, 0.8, 0.1, RngStream(2))
    io.save_rbm(tmp_path / "rbm", model)
    back, _ = io.load_rbm(tmp_path / "rbm")
    np.testing.assert_array_equal(back.w, model.w)
    np.testing.assert_array_equal(back.bh, model.bh)
    manifest = io.read_manifest(tmp_path / "rbm")
    assert sorted(manifest) == ["bh", "bv", "header", "kind", "n_hidden", "n_visible", "w"]
