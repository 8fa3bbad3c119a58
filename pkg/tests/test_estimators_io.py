import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from fracvirial.errors import InputError
from fracvirial.estimators import CollapseLawRegressor, FractionalLaplacianTransformer
from fracvirial.fracops import FieldOnGrid, Grid, frac_laplacian
from fracvirial.io import read_field, write_field, write_field_csv, write_table


def test_transformer_matches_operator_on_batch():
    g = Grid(1, 8.0, 64)
    rng = np.random.default_rng(0)
    X = np.stack([g.random_bandlimited(rng, 3.0, real=True).values.real for _ in range(5)])
    tr = FractionalLaplacianTransformer(s=0.6, dim=1, half_length=8.0, points=64).fit(X)
    out = tr.transform(X)
    assert out.shape == X.shape and not np.iscomplexobj(out)
    np.testing.assert_allclose(out[2], frac_laplacian(FieldOnGrid(g, X[2]), 0.6).values.real, atol=1e-12)


def test_transformer_flattened_2d_input_and_clone():
    tr = FractionalLaplacianTransformer(s=0.7, dim=2, half_length=4.0, points=16)
    X = np.random.default_rng(1).standard_normal((3, 256))
    assert tr.fit_transform(X).shape == (3, 256)
    assert clone(tr).get_params() == tr.get_params()


def test_pipeline_composes_powers():
    X = np.random.default_rng(2).standard_normal((2, 32))
    kw = dict(points=32, half_length=4.0)
    pipe = make_pipeline(FractionalLaplacianTransformer(s=0.3, **kw), FractionalLaplacianTransformer(s=0.3, **kw))
    np.testing.assert_allclose(pipe.fit_transform(X), FractionalLaplacianTransformer(s=0.6, **kw).fit_transform(X),
                               atol=1e-11)


def test_collapse_regressor_recovers_law():
    t = np.linspace(0.0, 1.9, 100)
    y = -3.0 * np.abs(t - 2.0) ** -0.6
    reg = CollapseLawRegressor(s=0.8).fit(t.reshape(-1, 1), y)
    assert reg.C_ == pytest.approx(3.0, rel=1e-6)
    assert reg.t_star_ == pytest.approx(2.0, rel=1e-6)
    np.testing.assert_allclose(reg.predict(t), y, rtol=1e-6)
    assert reg.score(t, y) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(dim=st.sampled_from([1, 2]), points=st.sampled_from([4, 8, 16]), s=st.floats(0.01, 0.99),
       sigma=st.floats(0.1, 4.0), seed=st.integers(0, 2 ** 31))
def test_binary_round_trip(tmp_path_factory, dim, points, s, sigma, seed):
    g = Grid(dim, 3.0, points)
    rng = np.random.default_rng(seed)
    u = g.field(rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    path = tmp_path_factory.mktemp("io") / "u.bin"
    write_field(path, u, s, sigma)
    v, s2, sigma2 = read_field(path)
    assert v.grid == g and s2 == s and sigma2 == sigma
    assert np.array_equal(v.values, u.values)


def test_truncated_binary_rejected(tmp_path):
    g = Grid(1, 1.0, 8)
    path = tmp_path / "u.bin"
    write_field(path, g.gaussian(), 0.5, 1.0)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InputError):
        read_field(path)


def test_csv_exports_are_exact(tmp_path):
    g = Grid(2, 2.0, 4)
    u = g.gaussian(1.0, 0.7)
    write_field_csv(tmp_path / "u.csv", u)
    with open(tmp_path / "u.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "re", "im"]
    assert np.array_equal(np.array([float(r[2]) for r in rows[1:]]), u.values.real.ravel())
    write_table(tmp_path / "t.csv", ["a", "b"], [[0.1, 3], [np.float64(1 / 3), "x"]])
    assert (tmp_path / "t.csv").read_text().splitlines() == ["a,b", "0.1,3", "0.3333333333333333,x"]
