"""Compositional embeddings: products across coordinate blocks,
mixtures with cross terms, pushforwards, reweighting, and matrix
scaling."""

import math
import random

import numpy as np
import pytest

from kembed.combinators import (
    change_of_measure,
    matrix_valued_embed,
    mixture_embed,
    product_embed,
    pushforward_embed,
    split_product_measure,
)
from kembed.dictionary import CLOSED_FORM, NUMERIC_FALLBACK, embed
from kembed.errors import InvalidSpecError
from kembed.kernels import (
    AffineMap,
    GaussianKernel,
    MaternKernel,
    MatrixValuedKernel,
    ProductKernel,
    SumKernel,
    WendlandKernel,
)
from kembed.measures import (
    EmpiricalMeasure,
    GaussianMeasure,
    MixtureMeasure,
    UniformBoxMeasure,
)
from kembed.oracle import estimate_kpp, estimate_mean


def test_product_embed_tensorizes():
    k1 = GaussianKernel(lengthscales=(0.8,))
    k2 = MaternKernel(nu=1.5, lengthscale=0.6)
    p1 = UniformBoxMeasure(lows=(0.0,), highs=(2.0,))
    p2 = UniformBoxMeasure(lows=(-1.0,), highs=(1.0,))
    e1, e2 = embed(k1, p1), embed(k2, p2)
    prod = product_embed([e1, e2], [1, 1])
    rng = random.Random(22)
    for _ in range(20):
        x = [rng.uniform(0.0, 2.0), rng.uniform(-1.0, 1.0)]
        expected = e1.kp_at([x[0]]) * e2.kp_at([x[1]])
        assert prod.kp_at(x) == pytest.approx(expected, rel=1e-13)
    assert prod.kpp == pytest.approx(e1.kpp * e2.kpp, rel=1e-13)
    assert prod.provenance == CLOSED_FORM


def test_product_embed_through_dispatch():
    # a product kernel over a box splits into per-block embeddings
    k = ProductKernel(
        [GaussianKernel(lengthscales=(0.8,)), GaussianKernel(lengthscales=(1.5,))],
        [1, 1],
    )
    p = UniformBoxMeasure(lows=(0.0, -1.0), highs=(2.0, 1.0))
    e = embed(k, p)
    direct = embed(GaussianKernel(lengthscales=(0.8, 1.5)), p)
    assert e.kpp == pytest.approx(direct.kpp, rel=1e-13)
    x = [0.3, 0.2]
    assert e.kp_at(x) == pytest.approx(direct.kp_at(x), rel=1e-13)


def test_product_embed_mixed_families():
    k = ProductKernel(
        [MaternKernel(nu=0.5, lengthscale=0.7), WendlandKernel(order=0, lengthscale=1.0)],
        [1, 1],
    )
    p = UniformBoxMeasure(lows=(0.0, 0.0), highs=(1.0, 1.0))
    e = embed(k, p)
    assert e.provenance == CLOSED_FORM
    o = estimate_kpp(k, p, budget=50_000, method="monte_carlo", seed=5)
    assert e.kpp == pytest.approx(o.value, abs=3 * o.stderr)


def test_mixture_kpp_gaussian_closed_cross_terms():
    k = GaussianKernel(lengthscales=(1.0,))
    comps = [
        GaussianMeasure(mean=(0.0,), cov=(1.0,)),
        GaussianMeasure(mean=(2.0,), cov=(0.25,)),
    ]
    mix = MixtureMeasure(components=comps, weights=(0.6, 0.4))
    e = embed(k, mix)
    assert e.provenance == CLOSED_FORM
    assert e.kpp_stderr == 0.0
    # dual route: plain Monte Carlo on the mixture
    o = estimate_kpp(k, mix, budget=4_000_000, method="monte_carlo", seed=1)
    assert e.kpp == pytest.approx(o.value, abs=3 * o.stderr)


def test_mixture_kp_is_weighted_sum():
    k = GaussianKernel(lengthscales=(1.0,))
    comps = [
        GaussianMeasure(mean=(0.0,), cov=(1.0,)),
        GaussianMeasure(mean=(2.0,), cov=(0.25,)),
    ]
    mix = MixtureMeasure(components=comps, weights=(0.6, 0.4))
    e = embed(k, mix)
    parts = [embed(k, c) for c in comps]
    for x in ([0.0], [1.3], [-2.0]):
        expected = 0.6 * parts[0].kp_at(x) + 0.4 * parts[1].kp_at(x)
        assert e.kp_at(x) == pytest.approx(expected, rel=1e-14)


def test_mixture_empirical_cross_terms_exact():
    k = GaussianKernel(lengthscales=(1.0,))
    emp1 = EmpiricalMeasure(points=np.array([[0.0], [1.0]]))
    emp2 = EmpiricalMeasure(points=np.array([[0.5], [2.0], [3.0]]))
    mix = MixtureMeasure(components=[emp1, emp2], weights=(0.5, 0.5))
    e = embed(k, mix)
    assert e.provenance == CLOSED_FORM
    assert e.kpp_stderr == 0.0
    # brute force over all atom pairs
    atoms = [(0.25, 0.0), (0.25, 1.0), (1 / 6, 0.5), (1 / 6, 2.0), (1 / 6, 3.0)]
    brute = sum(
        wi * wj * k([xi], [xj]) for wi, xi in atoms for wj, xj in atoms
    )
    assert e.kpp == pytest.approx(brute, rel=1e-13)


def test_mixture_mc_cross_terms_flagged():
    # matern kernel on gaussian components: cross terms have no closed
    # form and fall back to Monte Carlo with a reported stderr
    k = MaternKernel(nu=1.5, lengthscale=1.0)
    comps = [
        GaussianMeasure(mean=(0.0,), cov=(1.0,)),
        GaussianMeasure(mean=(1.5,), cov=(0.5,)),
    ]
    mix = MixtureMeasure(components=comps, weights=(0.5, 0.5))
    e = embed(k, mix, seed=7)
    assert e.kpp_provenance == NUMERIC_FALLBACK
    assert e.kpp_stderr > 0.0
    o = estimate_kpp(k, mix, budget=1_000_000, method="monte_carlo", seed=11)
    assert e.kpp == pytest.approx(
        o.value, abs=3 * math.hypot(e.kpp_stderr, o.stderr)
    )


def test_mixture_embed_shape_validation():
    e = embed(GaussianKernel(lengthscales=(1.0,)),
              GaussianMeasure(mean=(0.0,), cov=(1.0,)))
    with pytest.raises(InvalidSpecError):
        mixture_embed([[e], [e]], weights=(1.0,))
    with pytest.raises(InvalidSpecError):
        mixture_embed([[e, e], [e]], weights=(0.5, 0.5))


def test_sum_kernel_under_mixture():
    # two kernel components against two mixture components exercises
    # the full grid
    g = GaussianKernel(lengthscales=(1.0,))
    m = MaternKernel(nu=0.5, lengthscale=1.0)
    s = SumKernel([g, m], [0.3, 0.7])
    box1 = UniformBoxMeasure(lows=(0.0,), highs=(1.0,))
    box2 = UniformBoxMeasure(lows=(0.5,), highs=(2.0,))
    mix = MixtureMeasure(components=[box1, box2], weights=(0.4, 0.6))
    e = embed(s, mix, seed=3)
    x = [0.8]
    expected = sum(
        wj * gq * embed(kq, pj).kp_at(x)
        for wj, pj in ((0.4, box1), (0.6, box2))
        for gq, kq in ((0.3, g), (0.7, m))
    )
    assert e.kp_at(x) == pytest.approx(expected, rel=1e-13)
    o = estimate_kpp(s, mix, budget=1_000_000, method="monte_carlo", seed=13)
    assert e.kpp == pytest.approx(
        o.value, abs=3 * math.hypot(e.kpp_stderr, o.stderr)
    )


def test_pushforward_embed_wraps_kp():
    inner = embed(GaussianKernel(lengthscales=(1.0,)),
                  UniformBoxMeasure(lows=(1.0,), highs=(3.0,)))
    pf = pushforward_embed(inner, AffineMap(2.0, 1.0))
    # x in base coordinates maps to 2x+1 in image coordinates
    assert pf.kp_at([0.5]) == pytest.approx(inner.kp_at([2.0]), rel=1e-15)
    assert pf.kpp == inner.kpp


def test_change_of_measure_reweights():
    p = GaussianMeasure(mean=(0.0,), cov=(0.25,))
    q = GaussianMeasure(mean=(0.0,), cov=(1.0,))
    f = lambda x: float(x[0] ** 2)
    g = change_of_measure(f, p, q)
    est = estimate_mean(g, q, budget=400_000, seed=17)
    # E_p[X^2] = 0.25
    assert est.value == pytest.approx(0.25, abs=3 * est.stderr)


def test_change_of_measure_domination():
    p = UniformBoxMeasure(lows=(0.0,), highs=(2.0,))
    q = UniformBoxMeasure(lows=(0.0,), highs=(1.0,))
    g = change_of_measure(lambda x: 1.0, p, q)
    assert g([0.5]) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(InvalidSpecError):
        g([1.5])  # p puts mass where q has none
    # the reverse direction is fine: q's support is inside p's
    h = change_of_measure(lambda x: 1.0, q, p)
    assert h([1.5]) == 0.0


def test_matrix_valued_embed_scales():
    inner = embed(GaussianKernel(lengthscales=(1.0,)),
                  GaussianMeasure(mean=(0.0,), cov=(1.0,)))
    b = np.array([[2.0, 0.5], [0.5, 1.0]])
    mv = matrix_valued_embed(inner, b)
    np.testing.assert_allclose(mv.kp_at([0.3]), b * inner.kp_at([0.3]), rtol=1e-15)
    np.testing.assert_allclose(mv.kpp, b * inner.kpp, rtol=1e-15)


def test_matrix_valued_through_dispatch():
    k = MatrixValuedKernel(
        base=GaussianKernel(lengthscales=(1.0,)),
        matrix=np.array([[2.0, 0.5], [0.5, 1.0]]),
    )
    p = GaussianMeasure(mean=(0.0,), cov=(1.0,))
    e = embed(k, p)
    assert np.asarray(e.kpp).shape == (2, 2)
    assert e.kpp[0][0] == pytest.approx(2.0 / math.sqrt(3.0), rel=1e-14)


def test_split_product_measure():
    box = UniformBoxMeasure(lows=(0.0, -1.0, 2.0), highs=(1.0, 1.0, 3.0))
    parts = split_product_measure(box, [2, 1])
    assert len(parts) == 2
    assert parts[0].lows == (0.0, -1.0)
    assert parts[1].highs == (3.0,)

    diag = GaussianMeasure(mean=(0.0, 1.0), cov=(1.0, 4.0))
    parts = split_product_measure(diag, [1, 1])
    assert parts is not None
    assert parts[1].mean == (1.0,)

    block = np.array([
        [1.0, 0.3, 0.0],
        [0.3, 1.0, 0.0],
        [0.0, 0.0, 2.0],
    ])
    g = GaussianMeasure(mean=(0.0, 0.0, 0.0), cov=block)
    parts = split_product_measure(g, [2, 1])
    assert parts is not None
    np.testing.assert_allclose(parts[0].cov, block[:2, :2])
    # a coupled block cannot split
    assert split_product_measure(g, [1, 2]) is None


def test_block_product_gaussian_dispatch():
    # full-covariance gaussian with block structure splits and embeds
    block = np.array([
        [1.0, 0.3, 0.0],
        [0.3, 1.0, 0.0],
        [0.0, 0.0, 2.0],
    ])
    p = GaussianMeasure(mean=(0.1, -0.2, 0.5), cov=block)
    k = ProductKernel(
        [GaussianKernel(matrix=np.array([[1.0, 0.1], [0.1, 1.5]])),
         GaussianKernel(lengthscales=(0.9,))],
        [2, 1],
    )
    e = embed(k, p)
    assert e.provenance == CLOSED_FORM
    o = estimate_kpp(k, p, budget=500_000, method="monte_carlo", seed=19)
    assert e.kpp == pytest.approx(o.value, abs=3 * o.stderr)
