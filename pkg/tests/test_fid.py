import json

import numpy as np
import pytest

from modakit.errors import InsufficientSamplesError, InvalidCovarianceError, ParseError, ShapeError
from modakit.fid import (
    GaussianSummary,
    fid_between_files,
    frechet_distance,
    psd_sqrt,
    read_features,
    summarize,
    write_features,
)

from oracles import diagonal_oracle, sqrtm_oracle


def random_spd(rng, d):
    m = rng.normal(size=(d, d))
    return m @ m.T + 0.1 * np.eye(d)


def test_summarize_one_dimensional():
    s = summarize(np.array([[0.0], [2.0]]))
    assert s.mu.tolist() == [1.0]
    assert s.sigma.tolist() == [[2.0]]


def test_identical_samples_give_zero_covariance():
    s = summarize(np.tile([1.0, -2.0, 3.0], (5, 1)))
    assert np.array_equal(s.sigma, np.zeros((3, 3)))


def test_constant_column_has_zero_row_and_column():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 3))
    x[:, 1] = 4.0
    s = summarize(x)
    assert np.all(s.sigma[1] == 0) and np.all(s.sigma[:, 1] == 0)


def test_insufficient_samples():
    with pytest.raises(InsufficientSamplesError):
        summarize(np.ones((1, 3)))


def test_self_distance_is_zero():
    rng = np.random.default_rng(1)
    s = summarize(rng.normal(size=(200, 6)))
    assert frechet_distance(s, s) == pytest.approx(0.0, abs=1e-8)


def test_one_dimensional_closed_form():
    a = GaussianSummary([0.0], [[1.0]])
    b = GaussianSummary([1.0], [[1.0]])
    assert frechet_distance(a, b) == pytest.approx(1.0, abs=1e-12)


def test_swapped_diagonal_variances():
    a = GaussianSummary([0.0, 0.0], np.diag([1.0, 4.0]))
    b = GaussianSummary([0.0, 0.0], np.diag([4.0, 1.0]))
    assert frechet_distance(a, b) == pytest.approx(2.0, abs=1e-12)


def test_diagonal_closed_form_random():
    rng = np.random.default_rng(2)
    for _ in range(30):
        d = int(rng.integers(1, 9))
        mu_a, mu_b = rng.normal(size=d), rng.normal(size=d)
        va, vb = rng.uniform(0.0, 5.0, d), rng.uniform(0.0, 5.0, d)
        got = frechet_distance(GaussianSummary(mu_a, np.diag(va)), GaussianSummary(mu_b, np.diag(vb)))
        assert got == pytest.approx(diagonal_oracle(mu_a, va, mu_b, vb), abs=1e-8)


def test_full_covariance_matches_sqrtm_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        d = int(rng.integers(1, 7))
        mu_a, mu_b = rng.normal(size=d), rng.normal(size=d)
        sa, sb = random_spd(rng, d), random_spd(rng, d)
        got = frechet_distance(GaussianSummary(mu_a, sa), GaussianSummary(mu_b, sb))
        assert got == pytest.approx(sqrtm_oracle(mu_a, sa, mu_b, sb), rel=1e-7, abs=1e-8)


def test_symmetry_and_translation_invariance():
    rng = np.random.default_rng(4)
    xa, xb = rng.normal(size=(300, 5)), rng.normal(1.0, 2.0, size=(250, 5))
    a, b = summarize(xa), summarize(xb)
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-8)
    shift = rng.normal(size=5)
    moved = frechet_distance(summarize(xa + shift), summarize(xb + shift))
    assert moved == pytest.approx(frechet_distance(a, b), rel=1e-9)


def test_summarize_is_affine_equivariant():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(100, 3))
    m = rng.normal(size=(3, 3))
    t = rng.normal(size=3)
    s, s2 = summarize(x), summarize(x @ m.T + t)
    assert np.allclose(s2.mu, m @ s.mu + t)
    assert np.allclose(s2.sigma, m @ s.sigma @ m.T)


def test_sampled_gaussian_close_to_analytic():
    rng = np.random.default_rng(6)
    d = 4
    mu_a, mu_b = np.zeros(d), np.full(d, 0.5)
    sa, sb = random_spd(rng, d), random_spd(rng, d)
    xa = rng.multivariate_normal(mu_a, sa, size=100_000)
    xb = rng.multivariate_normal(mu_b, sb, size=100_000)
    analytic = sqrtm_oracle(mu_a, sa, mu_b, sb)
    assert frechet_distance(summarize(xa), summarize(xb)) == pytest.approx(analytic, rel=0.03)


def test_psd_sqrt_squares_back():
    rng = np.random.default_rng(7)
    s = random_spd(rng, 5)
    r = psd_sqrt(s)
    assert np.allclose(r @ r, s)
    assert np.allclose(r, r.T)


def test_indefinite_covariance_rejected():
    bad = GaussianSummary([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    good = GaussianSummary([0.0, 0.0], np.eye(2))
    with pytest.raises(InvalidCovarianceError):
        frechet_distance(bad, good)
    with pytest.raises(InvalidCovarianceError):
        frechet_distance(good, bad)


def test_asymmetric_covariance_rejected():
    with pytest.raises(InvalidCovarianceError):
        GaussianSummary([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        frechet_distance(GaussianSummary([0.0], [[1.0]]), GaussianSummary([0.0, 0.0], np.eye(2)))


# ---------------------------------------------------------------------------
# feature files

def test_csv_with_and_without_header(tmp_path):
    (tmp_path / "h.csv").write_text("f0,f1\n1,2\n3,4\n")
    (tmp_path / "n.csv").write_text("1,2\n3,4\n")
    assert read_features(tmp_path / "h.csv").tolist() == [[1, 2], [3, 4]]
    assert read_features(tmp_path / "n.csv").tolist() == [[1, 2], [3, 4]]


def test_csv_malformed_reports_line(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3,4\n5,x\n")
    with pytest.raises(ParseError) as exc:
        read_features(tmp_path / "bad.csv")
    assert exc.value.line == 3 and "line 3" in str(exc.value)
    (tmp_path / "ragged.csv").write_text("1,2\n3\n")
    with pytest.raises(ParseError) as exc:
        read_features(tmp_path / "ragged.csv")
    assert exc.value.line == 2


def test_raw_round_trip(tmp_path):
    x = np.arange(12, dtype=np.float32).reshape(4, 3)
    write_features(x, tmp_path / "f.f32")
    assert json.loads((tmp_path / "f.f32.json").read_text()) == {"n": 4, "d": 3}
    assert np.array_equal(read_features(tmp_path / "f.f32"), x)


def test_raw_wrong_size_reports_offset(tmp_path):
    (tmp_path / "f.f32").write_bytes(b"\x00" * 20)
    (tmp_path / "f.f32.json").write_text('{"n": 2, "d": 3}')
    with pytest.raises(ParseError) as exc:
        read_features(tmp_path / "f.f32")
    assert exc.value.offset == 20


def test_raw_without_sidecar(tmp_path):
    (tmp_path / "f.bin").write_bytes(b"\x00" * 8)
    with pytest.raises(ParseError):
        read_features(tmp_path / "f.bin")


def test_fid_between_files_self_is_zero(tmp_path):
    rng = np.random.default_rng(8)
    x = rng.normal(size=(64, 4))
    write_features(x, tmp_path / "a.csv")
    assert fid_between_files(tmp_path / "a.csv", tmp_path / "a.csv") == pytest.approx(0.0, abs=1e-8)
