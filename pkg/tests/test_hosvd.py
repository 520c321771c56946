import numpy as np
import pytest

from uws.errors import (
    DegenerateSpectrumError,
    InternalConsistencyError,
    InvalidArgumentError,
)
from uws.hosvd import (
    SliceCoefficients,
    SubspaceModel,
    center,
    hosvd_truncated,
    project_slice,
    reconstruct,
    reconstruct_slice,
    secondary_subspace,
)
from uws.spectral import RankPolicy
from uws.tensor import DenseTensor, frobenius_norm

from oracles import (
    best_rank_k_error,
    covariance_principal_directions,
    haar_columns,
    sign_canonical,
)


def relerr(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def planted_stack(rng, n=60, d=10, k=3, noise=0.0):
    """Rows = constant mean row + combination of k basis directions."""
    q = haar_columns(d, k, rng)
    mean_row = rng.standard_normal(d)
    c = rng.standard_normal((n, k))
    x = np.outer(np.ones(n), mean_row) + c @ q.T
    if noise:
        x = x + noise * rng.standard_normal((n, d))
    return x, q


# --------------------------------------------------------------------- center


def test_center_constant_tensor():
    t = DenseTensor.from_array(np.full((3, 4), 7.0))
    mu, xc = center(t, "global")
    assert float(mu) == 7.0
    assert np.all(xc.to_array() == 0.0)
    mu, xc = center(t, "feature")
    assert np.all(mu == 7.0)
    assert np.all(xc.to_array() == 0.0)


def test_center_global_hand_example():
    mu, xc = center(DenseTensor.from_array(np.array([1.0, 3.0])), "global")
    assert float(mu) == 2.0
    assert np.array_equal(xc.to_array(), np.array([-1.0, 1.0]))


def test_center_feature_hand_example():
    t = DenseTensor.from_array(np.array([[1.0, 2.0], [3.0, 4.0]]))
    mu, xc = center(t, "feature", stack_mode=1)
    assert np.array_equal(mu, np.array([[2.0, 3.0]]))
    assert np.array_equal(xc.to_array(), np.array([[-1.0, -1.0], [1.0, 1.0]]))


def test_center_roundtrip():
    rng = np.random.default_rng(41)
    a = rng.standard_normal((5, 6, 4))
    for mode in ("global", "feature"):
        mu, xc = center(DenseTensor.from_array(a), mode)
        assert np.allclose(xc.to_array() + mu, a, rtol=0, atol=1e-14)


def test_center_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        center(DenseTensor.from_array(np.array([1.0, np.nan])), "global")


# ------------------------------------------------------------ hosvd_truncated


def test_exact_rank_one_recovery():
    rng = np.random.default_rng(42)
    n, d = 30, 8
    a = rng.standard_normal(n)
    a -= a.mean()
    b = rng.standard_normal(d)
    x = np.outer(np.ones(n), rng.standard_normal(d)) + np.outer(a, b)
    model = hosvd_truncated(
        DenseTensor.from_array(x), RankPolicy.cumulative_variance(0.9)
    )
    assert [f.shape[1] for f in model.factors] == [1, 1]
    assert relerr(reconstruct(model).to_array(), x) < 1e-8


@pytest.mark.parametrize("shape", [(6, 9), (5, 4, 7)])
def test_full_fixed_k_reconstructs_exactly(shape):
    rng = np.random.default_rng(43)
    x = rng.standard_normal(shape)
    policies = [RankPolicy.fixed_k(s) for s in shape]
    model = hosvd_truncated(DenseTensor.from_array(x), policies)
    assert relerr(reconstruct(model).to_array(), x) < 1e-8


@pytest.mark.parametrize("shape", [(12, 7), (6, 5, 8)])
@pytest.mark.parametrize("centering", ["feature", "global"])
def test_tau_one_reconstructs_exactly(shape, centering):
    rng = np.random.default_rng(44)
    x = rng.standard_normal(shape)
    model = hosvd_truncated(
        DenseTensor.from_array(x),
        RankPolicy.cumulative_variance(1.0),
        centering=centering,
    )
    assert relerr(reconstruct(model).to_array(), x) < 1e-8
    for f in model.factors:
        assert np.max(np.abs(f.T @ f - np.eye(f.shape[1]))) < 1e-10


def test_factor_orthonormality_and_ledger():
    rng = np.random.default_rng(45)
    x = rng.standard_normal((10, 6, 4))
    model = hosvd_truncated(DenseTensor.from_array(x), RankPolicy.cumulative_variance(0.8))
    assert set(model.variance_ledger) == {1, 2, 3}
    for mode, spec in model.variance_ledger.items():
        f = model.factors[mode - 1]
        assert f.shape[1] == spec.retained
        assert abs(spec.ratios.sum() - 1.0) < 1e-12
        assert np.all(np.diff(spec.ratios) <= 1e-15)
    assert model.core.shape == tuple(f.shape[1] for f in model.factors)


def test_eckart_young_order2_all_k():
    rng = np.random.default_rng(46)
    for _ in range(5):
        x = rng.standard_normal((14, 9))
        t = DenseTensor.from_array(x)
        mu, xc = center(t, "feature")
        xc = xc.to_array()
        norm = np.linalg.norm(xc)
        for k in range(1, 10):
            model = hosvd_truncated(t, RankPolicy.fixed_k(k))
            err = np.linalg.norm(reconstruct(model).to_array() - x)
            want = best_rank_k_error(xc, k)
            assert abs(err - want) <= 1e-8 * norm


def test_pca_equivalence_on_stacks():
    rng = np.random.default_rng(47)
    for _ in range(5):
        x = rng.standard_normal((40, 7))
        model = hosvd_truncated(
            DenseTensor.from_array(x), RankPolicy.cumulative_variance(1.0)
        )
        xc = x - x.mean(axis=0)
        pcs, _ = covariance_principal_directions(xc)
        got = sign_canonical(model.factors[1])
        want = sign_canonical(pcs[:, : got.shape[1]])
        assert np.max(np.abs(got - want)) < 1e-8


def test_reconstruction_error_nonincreasing_in_rank():
    rng = np.random.default_rng(48)
    x = rng.standard_normal((8, 7, 6))
    t = DenseTensor.from_array(x)
    for mode in range(3):
        errs = []
        for k in range(1, t.shape[mode] + 1):
            ks = [3, 3, 3]
            ks[mode] = k
            model = hosvd_truncated(t, [RankPolicy.fixed_k(v) for v in ks])
            errs.append(np.linalg.norm(reconstruct(model).to_array() - x))
        assert all(a >= b - 1e-10 for a, b in zip(errs, errs[1:]))


def test_degenerate_inputs():
    with pytest.raises(DegenerateSpectrumError):
        hosvd_truncated(DenseTensor.from_array(np.zeros((4, 3))))
    # constant stack has no variance after feature centering
    with pytest.raises(DegenerateSpectrumError):
        hosvd_truncated(DenseTensor.from_array(np.full((4, 3), 2.5)), centering="feature")
    with pytest.raises(InvalidArgumentError):
        hosvd_truncated(DenseTensor.from_array(np.array([[1.0, np.inf]])))


def test_single_slab_stack_is_permitted():
    rng = np.random.default_rng(49)
    x = rng.standard_normal((6, 9))  # one model's rows only
    model = hosvd_truncated(DenseTensor.from_array(x), RankPolicy.cumulative_variance(1.0))
    assert relerr(reconstruct(model).to_array(), x) < 1e-8


def test_determinism():
    rng = np.random.default_rng(50)
    x = rng.standard_normal((9, 5, 4))
    m1 = hosvd_truncated(DenseTensor.from_array(x), RankPolicy.cumulative_variance(0.9))
    m2 = hosvd_truncated(DenseTensor.from_array(x), RankPolicy.cumulative_variance(0.9))
    for f1, f2 in zip(m1.factors, m2.factors):
        assert np.array_equal(f1, f2)
    assert np.array_equal(m1.core.data, m2.core.data)


# -------------------------------------------------- slice project/reconstruct


def make_planted_model(rng, n=40, d=10, k=3):
    x, q = planted_stack(rng, n=n, d=d, k=k)
    t = DenseTensor.from_array(x)
    model = hosvd_truncated(t, RankPolicy.cumulative_variance(0.999), slab_extent=4)
    return model, x, q


def test_project_slice_of_mu_is_zero():
    rng = np.random.default_rng(51)
    model, x, _ = make_planted_model(rng)
    mu_slab = np.broadcast_to(model.mu, (4, x.shape[1]))
    coeffs = project_slice(model, DenseTensor.from_array(mu_slab))
    assert np.max(np.abs(coeffs.coeffs)) < 1e-12


def test_in_subspace_round_trip():
    rng = np.random.default_rng(52)
    model, x, q = make_planted_model(rng)
    slab = x[:4]  # rows of the stack itself lie in the subspace
    back = reconstruct_slice(model, project_slice(model, DenseTensor.from_array(slab)))
    assert relerr(back.to_array(), slab) < 1e-8


def test_projection_pythagoras_and_residual_orthogonality():
    rng = np.random.default_rng(53)
    model, x, _ = make_planted_model(rng)
    slab = rng.standard_normal((4, x.shape[1]))
    t = DenseTensor.from_array(slab)
    coeffs = project_slice(model, t)
    back = reconstruct_slice(model, coeffs).to_array()
    centered = slab - np.asarray(model.mu)
    resid = slab - back
    lhs = np.linalg.norm(centered) ** 2
    rhs = np.linalg.norm(coeffs.coeffs) ** 2 + np.linalg.norm(resid) ** 2
    assert abs(lhs - rhs) <= 1e-8 * lhs
    # residual carries no component along any retained feature direction
    assert np.max(np.abs(resid @ model.factors[1])) < 1e-8


def test_projection_is_linear_when_mu_vanishes():
    rng = np.random.default_rng(54)
    x = rng.standard_normal((30, 8))
    x -= x.mean()  # global mean ~ 0
    model = hosvd_truncated(
        DenseTensor.from_array(x), RankPolicy.fixed_k(4), centering="global", slab_extent=3
    )
    a, b = 1.7, -0.6
    y1 = rng.standard_normal((3, 8))
    y2 = rng.standard_normal((3, 8))
    p = lambda arr: project_slice(model, DenseTensor.from_array(arr)).coeffs
    combo = p(a * y1 + b * y2)
    split = a * p(y1) + b * p(y2)
    assert np.max(np.abs(combo - split)) < 1e-10


def test_project_slice_shape_mismatch():
    rng = np.random.default_rng(55)
    model, x, _ = make_planted_model(rng)
    with pytest.raises(InvalidArgumentError):
        project_slice(model, DenseTensor.from_array(rng.standard_normal((4, x.shape[1] + 1))))


def test_reconstruct_slice_zero_coeffs_gives_mu():
    rng = np.random.default_rng(56)
    model, x, _ = make_planted_model(rng)
    k2 = model.factors[1].shape[1]
    out = reconstruct_slice(model, SliceCoefficients(label=None, coeffs=np.zeros((4, k2))))
    assert np.allclose(out.to_array(), np.broadcast_to(model.mu, (4, x.shape[1])), atol=1e-14)


def test_order3_slice_round_trip():
    rng = np.random.default_rng(57)
    T, r, d = 12, 5, 9
    q = haar_columns(d, 3, rng)
    slabs = [rng.standard_normal((r, 3)) @ q.T for _ in range(T)]
    x = np.stack(slabs, axis=0)
    model = hosvd_truncated(
        DenseTensor.from_array(x), RankPolicy.cumulative_variance(0.999), slab_extent=1
    )
    slab = slabs[3]
    coeffs = project_slice(model, DenseTensor.from_array(slab))
    back = reconstruct_slice(model, coeffs).to_array()
    assert back.shape == (1, r, d)
    assert relerr(back[0], slab) < 1e-8


# --------------------------------------------------------- secondary subspace


def test_secondary_orthogonal_to_primary_and_variance_split():
    rng = np.random.default_rng(58)
    x, _ = planted_stack(rng, n=50, d=12, k=4, noise=0.05)
    t = DenseTensor.from_array(x)
    model = hosvd_truncated(t, RankPolicy.fixed_k(4))
    # full remaining rank along the feature mode
    k2 = 12 - 4
    second = secondary_subspace(t, model, k2)
    for u1, u2 in zip(model.factors, second.factors):
        assert np.max(np.abs(u1.T @ u2)) < 1e-8
    primary_kept = model.variance_ledger[2].ratios[:4].sum()
    secondary_kept = second.variance_ledger[2].ratios[4 : 4 + k2].sum()
    assert abs(primary_kept + secondary_kept - 1.0) < 1e-8


def test_secondary_on_exactly_low_rank_input_is_degenerate():
    rng = np.random.default_rng(59)
    x, _ = planted_stack(rng, n=50, d=12, k=4, noise=0.0)
    t = DenseTensor.from_array(x)
    model = hosvd_truncated(t, RankPolicy.fixed_k(4))
    with pytest.raises(DegenerateSpectrumError):
        secondary_subspace(t, model, 2)


def test_secondary_k2_exceeding_remaining_rank():
    rng = np.random.default_rng(60)
    x, _ = planted_stack(rng, n=50, d=8, k=3, noise=0.05)
    t = DenseTensor.from_array(x)
    model = hosvd_truncated(t, RankPolicy.fixed_k(3))
    with pytest.raises(InvalidArgumentError):
        secondary_subspace(t, model, 6)


def test_secondary_reconstruction_is_worse_on_planted_signal():
    rng = np.random.default_rng(61)
    x, q = planted_stack(rng, n=60, d=16, k=4, noise=1e-3)
    t = DenseTensor.from_array(x)
    model = hosvd_truncated(t, RankPolicy.fixed_k(4), slab_extent=6)
    second = secondary_subspace(t, model, 4)
    slab = x[:6]
    st = DenseTensor.from_array(slab)
    err1 = relerr(reconstruct_slice(model, project_slice(model, st)).to_array(), slab)
    err2 = relerr(reconstruct_slice(second, project_slice(second, st)).to_array(), slab)
    assert err2 > 10 * err1


# ---------------------------------------------------------------- reconstruct


def test_reconstruct_detects_tampered_factors():
    rng = np.random.default_rng(62)
    x = rng.standard_normal((8, 6))
    model = hosvd_truncated(DenseTensor.from_array(x), RankPolicy.fixed_k(3))
    bad = SubspaceModel(
        mu=model.mu,
        factors=[model.factors[0], model.factors[1][:4]],
        core=model.core,
        variance_ledger=model.variance_ledger,
        centering=model.centering,
        stack_mode=model.stack_mode,
        shape=model.shape,
        slab_extent=model.slab_extent,
    )
    with pytest.raises(InternalConsistencyError):
        reconstruct(bad)


def test_reconstruct_zero_core_zero_mu():
    core = DenseTensor.from_array(np.zeros((2, 2)))
    model = SubspaceModel(
        mu=np.zeros((1, 4)),
        factors=[np.eye(3)[:, :2], np.eye(4)[:, :2]],
        core=core,
        variance_ledger={},
        centering="feature",
        stack_mode=1,
        shape=(3, 4),
        slab_extent=None,
    )
    assert np.all(reconstruct(model).to_array() == 0.0)
