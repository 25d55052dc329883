"""Distribution metrics against brute-force and analytic oracles, plus PCA."""
import itertools
import math

import numpy as np
import pytest

from tsdiff.errors import ContractError
from tsdiff.fidelity import (
    fidelity_csv, fidelity_report, pca_project, pooled_kl, pooled_ks,
    pooled_values, pooled_wasserstein, projection_csv,
)


# -- KS -----------------------------------------------------------------------

def brute_force_ks(x, y):
    """Exact ECDF sup-distance by scanning every sample point."""
    xs = np.sort(np.asarray(x, dtype=np.float64))
    ys = np.sort(np.asarray(y, dtype=np.float64))
    best = 0.0
    for pt in np.concatenate([xs, ys]):
        fx = np.searchsorted(xs, pt, side="right") / xs.size
        fy = np.searchsorted(ys, pt, side="right") / ys.size
        best = max(best, abs(fx - fy))
    return best


def test_ks_equals_brute_force_scan():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 101))
        m = int(rng.integers(2, 101))
        x = rng.normal(size=n)
        y = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2.0), size=m)
        if rng.uniform() < 0.3:
            shared = min(n, m) // 2
            y[:shared] = x[:shared]  # tied values must be handled exactly
        assert pooled_ks(x, y) == brute_force_ks(x, y)


def test_ks_identical_samples_zero():
    x = np.random.default_rng(1).normal(size=50)
    assert pooled_ks(x, x.copy()) == 0.0


def test_ks_disjoint_samples_one():
    assert pooled_ks(np.zeros(5), np.ones(5)) == 1.0


# -- Wasserstein ---------------------------------------------------------------

def exhaustive_transport(x, y):
    """Minimal mean |x_i - y_sigma(i)| over all 6! assignments."""
    best = math.inf
    for perm in itertools.permutations(range(len(y))):
        cost = sum(abs(x[i] - y[p]) for i, p in enumerate(perm)) / len(x)
        best = min(best, cost)
    return best


def test_wasserstein_matches_exhaustive_n6():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(size=6)
        y = rng.normal(size=6)
        assert pooled_wasserstein(x, y) == pytest.approx(
            exhaustive_transport(x.tolist(), y.tolist()), abs=1e-9)


def test_wasserstein_translation_property():
    rng = np.random.default_rng(3)
    x = rng.normal(size=200)
    y = rng.normal(size=300)
    base = pooled_wasserstein(x, y)
    shifted = pooled_wasserstein(x + 5.0, y + 5.0)
    assert shifted == pytest.approx(base, abs=1e-12)
    # shifting one sample by c moves W1 by at most c (equality when disjoint)
    assert pooled_wasserstein(x + 100.0, y) == pytest.approx(
        abs((x + 100.0).mean() - y.mean()), abs=1e-9)


def test_wasserstein_identical_zero():
    x = np.random.default_rng(4).normal(size=64)
    assert pooled_wasserstein(x, x.copy()) == 0.0


# -- KL -------------------------------------------------------------------------

def test_kl_identical_samples_near_zero():
    x = np.random.default_rng(5).normal(size=10_000)
    assert pooled_kl(x, x.copy()) < 1e-10


def test_kl_analytic_gaussian():
    """KL(N(0,1) || N(0.5,1)) = 0.125; histogram estimate within 15%."""
    r = np.random.default_rng(0)
    a = r.normal(0.0, 1.0, 50_000)
    b = r.normal(0.5, 1.0, 50_000)
    est = pooled_kl(a, b)
    assert abs(est - 0.125) <= 0.15 * 0.125


def test_kl_asymmetric():
    r = np.random.default_rng(6)
    a = r.normal(0.0, 1.0, 20_000)
    b = r.normal(0.0, 3.0, 20_000)
    assert pooled_kl(a, b) != pytest.approx(pooled_kl(b, a), rel=0.2)


def test_kl_disjoint_supports_finite():
    # smoothing keeps the estimate finite even with no overlap
    est = pooled_kl(np.zeros(100) + 1.0, np.zeros(100) + 2.0)
    assert np.isfinite(est)
    assert est > 1.0


def test_kl_rejects_degenerate_inputs():
    with pytest.raises(ContractError):
        pooled_kl(np.ones(10), np.ones(10))  # zero-width shared range
    with pytest.raises(ContractError):
        pooled_kl(np.array([]), np.ones(10))
    with pytest.raises(ContractError):
        pooled_kl(np.ones(10) * 0.5, np.ones(10), bins=1)


# -- pooling --------------------------------------------------------------------

def test_pooled_values_flattens_cohort(tiny_cohort):
    vals = pooled_values(tiny_cohort)
    assert vals.shape == (24 * 16 * 4,)
    vals0 = pooled_values(tiny_cohort, label=0)
    assert vals0.shape == (12 * 16 * 4,)


def test_pooled_values_accepts_pairs_and_batches(tiny_cohort):
    pairs = [(s.series, s.label) for s in tiny_cohort.subjects]
    assert pooled_values(pairs).shape == (24 * 16 * 4,)

    class FakeBatch:
        samples = np.zeros((3, 16, 4))
        class_label = 1
    assert pooled_values(FakeBatch(), label=1).shape == (3 * 16 * 4,)
    assert pooled_values([FakeBatch(), FakeBatch()]).shape == (6 * 16 * 4,)


def test_pooled_values_empty_label(tiny_cohort):
    with pytest.raises(ContractError):
        pooled_values(tiny_cohort, label=9)


# -- report ----------------------------------------------------------------------

def test_fidelity_report_per_class(tiny_cohort):
    synth = [(s.series + 0.01, s.label) for s in tiny_cohort.subjects]
    report = fidelity_report(tiny_cohort, synth)
    assert sorted(report.per_class) == [0, 1]
    for m in report.per_class.values():
        # 768 points per side: KL has a visible small-sample floor, WD/KS do not
        assert m.kl < 0.25 and m.wd < 0.05 and m.ks < 0.05
        assert m.n_real == 12 * 16 * 4
        assert m.n_synth == 12 * 16 * 4


def test_fidelity_report_label_intersection(tiny_cohort):
    synth = [(s.series, 0) for s in tiny_cohort.subjects if s.label == 0]
    report = fidelity_report(tiny_cohort, synth)
    assert list(report.per_class) == [0]


def test_fidelity_csv_layout(tiny_cohort):
    synth = [(s.series, s.label) for s in tiny_cohort.subjects]
    text = fidelity_csv(fidelity_report(tiny_cohort, synth))
    lines = text.strip().split("\n")
    assert lines[0] == "class,kl,wd,ks,n_real,n_synth"
    assert len(lines) == 3
    cells = lines[1].split(",")
    assert cells[0] == "0"
    assert float(cells[1]) >= 0.0
    assert int(cells[4]) == 768


# -- PCA projection ----------------------------------------------------------------

def _aniso_cloud(rng, n, direction, scale=5.0):
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    return rng.normal(size=(n, 1)) * scale * d + rng.normal(size=(n, d.size)) * 0.3


def test_pca_first_axis_aligns_with_dominant_direction(tiny_cohort):
    rng = np.random.default_rng(7)
    direction = np.array([1.0, -2.0, 0.5, 3.0])
    real = [( _aniso_cloud(rng, 30, direction), 0)]
    synth = [( _aniso_cloud(rng, 30, direction), 0)]
    proj = pca_project(real, synth)
    spread = proj.coords[:, 0].std(), proj.coords[:, 1].std()
    assert spread[0] > 3 * spread[1]
    assert proj.explained[0] > 0.8
    assert proj.explained[0] >= proj.explained[1] >= 0.0


def test_pca_projection_shapes_and_sources(tiny_cohort):
    synth = [(s.series, s.label) for s in tiny_cohort.subjects[:6]]
    proj = pca_project(tiny_cohort, synth)
    n_rows = 24 * 16 + 6 * 16
    assert proj.coords.shape == (n_rows, 2)
    assert len(proj.source) == n_rows
    assert set(proj.source) == {"real", "synthetic"}
    assert proj.labels.shape == (n_rows,)


def test_pca_sign_convention_deterministic():
    rng = np.random.default_rng(8)
    cloud = _aniso_cloud(rng, 50, [2.0, 1.0, 0.0])
    a = pca_project([(cloud, 0)], [(cloud, 0)])
    b = pca_project([(cloud.copy(), 0)], [(cloud.copy(), 0)])
    assert np.array_equal(a.coords, b.coords)
    # largest-magnitude loading of each axis is positive
    flipped = pca_project([(-cloud, 0)], [(-cloud, 0)])
    assert np.allclose(np.abs(flipped.coords), np.abs(a.coords), atol=1e-9)


def test_pca_needs_two_rois():
    with pytest.raises(ContractError):
        pca_project([(np.zeros((5, 1)), 0)], [(np.zeros((5, 1)), 0)])


def test_pca_rejects_zero_variance():
    with pytest.raises(ContractError):
        pca_project([(np.ones((5, 3)), 0)], [(np.ones((5, 3)), 0)])


def test_projection_csv_layout(tiny_cohort):
    synth = [(s.series, s.label) for s in tiny_cohort.subjects[:2]]
    text = projection_csv(pca_project(tiny_cohort, synth))
    lines = text.strip().split("\n")
    assert lines[0].startswith("# explained_variance: pc1=")
    assert lines[1] == "pc1,pc2,source,class"
    cells = lines[2].split(",")
    assert len(cells) == 4
    assert cells[2] == "real"
    assert cells[3] in ("0", "1")
    assert lines[-1].split(",")[2] == "synthetic"
