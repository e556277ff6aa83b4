import numpy as np
import pytest

from rshe_lab.noise import (
    NoiseLedger,
    NoiseSpec,
    StepDraw,
    convolution_field,
    draw_from_normals,
    path_rng,
    sample_ledger,
    sample_step,
    spectrum,
    spectrum_tail_bound,
    step_factor,
    step_law,
)
from rshe_lab.spectral import FOUR_PI_SQ


def test_spectrum_examples():
    assert spectrum(NoiseSpec(1.0, 8))[4] == 0.25
    assert spectrum(NoiseSpec(0.75, 8))[1] == 1.0
    assert spectrum(NoiseSpec(0.75, 8))[0] == 1.0
    np.testing.assert_allclose(spectrum(NoiseSpec(0.75, 8, multiplier=2.0)), 2 * spectrum(NoiseSpec(0.75, 8)))


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(0.5)
    with pytest.raises(ValueError):
        NoiseSpec(0.75, N=0)
    with pytest.raises(ValueError):
        NoiseSpec(multiplier=-1.0)


def test_square_summability_and_tail_bound():
    lam = 0.75
    partial = np.cumsum(spectrum(NoiseSpec(lam, 20000)) ** 2)
    assert np.all(np.diff(partial) > 0)
    for N in (10, 100, 1000):
        tail = partial[-1] - partial[N]
        # truncated tail is below the infinite one, which the bound dominates
        assert tail <= spectrum_tail_bound(lam, N)
    # bound is tight up to the integral-comparison slack
    assert partial[-1] - partial[100] > 0.5 * (spectrum_tail_bound(lam, 100) - spectrum_tail_bound(lam, 20000))


def test_step_law_closed_forms():
    law = step_law(4, 0.01)
    a = FOUR_PI_SQ
    assert law.var_dbeta[1] == 0.01
    assert law.var_conv[1] == pytest.approx((1 - np.exp(-2 * a * 0.01)) / (2 * a), rel=1e-14)
    assert law.cov[1] == pytest.approx((1 - np.exp(-a * 0.01)) / a, rel=1e-14)
    assert law.var_conv[0] == law.cov[0] == 0.01
    with pytest.raises(ValueError):
        step_law(4, 0.0)


def test_correlation_tends_to_one_for_small_steps():
    corr = []
    for h in (1e-2, 1e-4, 1e-6):
        law = step_law(2, h)
        corr.append(law.cov[1] / np.sqrt(law.var_dbeta[1] * law.var_conv[1]))
    assert corr[0] < corr[1] < corr[2] and corr[2] > 1 - 1e-5


def test_mean_mode_convolution_equals_increment(rng):
    d = sample_step(NoiseSpec(N=16), 0.01, rng)
    assert d.conv[0] == d.dbeta[0]
    led = sample_ledger(NoiseSpec(N=8), 0.1, 7, (0, 3))
    np.testing.assert_array_equal(led.conv[..., 0], led.dbeta[..., 0])


def test_stiff_modes_clamped_not_nan():
    f = step_factor(512, 1.0)
    assert np.all(np.isfinite(f.c_22)) and np.all(f.c_22 >= 0)


def test_convolution_field_examples():
    spec = NoiseSpec(0.75, 6)
    zero = StepDraw(np.zeros(7), np.zeros(7))
    np.testing.assert_array_equal(convolution_field(zero, spec), 0.0)
    draw = StepDraw(np.ones(7), np.ones(7))
    c = convolution_field(draw, NoiseSpec(60.0, 6))
    assert c[0] == 1.0 and np.all(c[2:] < 1e-18)


def test_convolution_energy_matches_closed_form(rng):
    spec, h = NoiseSpec(0.75, 32), 2.0**-6
    led = sample_ledger(spec, h, 20000, (5,))
    energy = np.sum((spectrum(spec) * led.conv[0]) ** 2, axis=-1)
    law = step_law(spec.N, h)
    expected = np.sum(spectrum(spec) ** 2 * law.var_conv)
    assert abs(energy.mean() - expected) < 3 * energy.std(ddof=1) / np.sqrt(energy.size)


def test_modes_uncorrelated():
    led = sample_ledger(NoiseSpec(0.75, 8), 0.01, 40000, (1,))
    c = led.conv[0]
    corr = np.corrcoef(c.T)
    off = corr[~np.eye(9, dtype=bool)]
    assert np.max(np.abs(off)) < 4.5 / np.sqrt(40000)


def test_nested_steps_have_same_second_moments():
    N, h, n = 4, 0.02, 100000
    a = FOUR_PI_SQ * np.arange(N + 1) ** 2
    half = sample_ledger(NoiseSpec(0.75, N, seed=3), h / 2, 2 * n, (0,))
    d1, d2 = half.dbeta[0, 0::2], half.dbeta[0, 1::2]
    c1, c2 = half.conv[0, 0::2], half.conv[0, 1::2]
    dbeta = d1 + d2
    conv = np.exp(-a * h / 2) * c1 + c2
    law = step_law(N, h)
    for emp, exact in ((dbeta**2, law.var_dbeta), (conv**2, law.var_conv), (dbeta * conv, law.cov)):
        se = emp.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(emp.mean(axis=0) - exact) < 3.5 * se)


def test_draw_from_normals_is_batched():
    f = step_factor(3, 0.1)
    z = np.random.default_rng(0).standard_normal((5, 2, 2, 4))
    db, cv = draw_from_normals(z, f)
    assert db.shape == cv.shape == (5, 2, 4)
    np.testing.assert_array_equal(db[3, 1], f.s_b * z[3, 1, 0])


def test_ledger_determinism_and_path_independence():
    spec = NoiseSpec(0.75, 8, seed=11)
    a = sample_ledger(spec, 0.01, 5, (0, 1, 2))
    b = sample_ledger(spec, 0.01, 5, (0, 1, 2))
    np.testing.assert_array_equal(a.dbeta, b.dbeta)
    alone = sample_ledger(spec, 0.01, 5, (2,))
    np.testing.assert_array_equal(alone.dbeta[0], a.dbeta[2])
    other = sample_ledger(NoiseSpec(0.75, 8, seed=12), 0.01, 5, (2,))
    assert not np.array_equal(other.dbeta, alone.dbeta)


def test_auxiliary_streams_differ_from_noise_stream():
    x = path_rng(0, 3).standard_normal(4)
    y = path_rng(0, 3, 1).standard_normal(4)
    assert not np.array_equal(x, y)


def test_ledger_json_round_trip():
    led = sample_ledger(NoiseSpec(0.9, 5, seed=4, multiplier=0.5), 0.03, 3, (2, 7))
    back = NoiseLedger.from_json(led.to_json())
    np.testing.assert_array_equal(back.dbeta, led.dbeta)
    np.testing.assert_array_equal(back.conv, led.conv)
    assert back.spec == led.spec and back.h == led.h and back.path_indices == led.path_indices


def test_brownian_paths_accumulate_increments():
    led = sample_ledger(NoiseSpec(N=3), 0.1, 6, (0,))
    beta = led.brownian_paths()
    assert beta.shape == (1, 7, 4)
    np.testing.assert_array_equal(beta[:, 0], 0.0)
    np.testing.assert_allclose(np.diff(beta, axis=-2), led.dbeta)
