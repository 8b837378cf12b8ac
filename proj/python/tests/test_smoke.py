import numpy as np
import pytest

import cachediff as cd


def rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape).astype(np.float32)


def test_fft_matches_numpy():
    x = rand((2, 3, 8, 6), 0)
    s = cd.fft2(x)
    assert s.dtype == np.complex64
    np.testing.assert_allclose(s, np.fft.fft2(x.astype(np.float64)), atol=1e-4)
    np.testing.assert_allclose(cd.ifft2(s), x, atol=1e-5)
    np.testing.assert_allclose(cd.center_shift(s), np.fft.fftshift(s, axes=(2, 3)))
    np.testing.assert_array_equal(cd.center_unshift(cd.center_shift(s)), s)


def test_masks_and_split_partition():
    low, high = cd.make_masks(8, 8, 0.5)
    assert low.sum() == 25 and np.all(low ^ high)
    x = rand((1, 2, 8, 8), 1)
    lo, hi = cd.split_frequency(x, 0.5)
    np.testing.assert_allclose(lo + hi, np.fft.fftshift(np.fft.fft2(x), axes=(2, 3)), atol=1e-4)
    assert np.all(lo[..., ~low] == 0) and np.all(hi[..., low] == 0)


def test_bias_inversion():
    c = rand((2, 4, 16, 16), 2)
    u = rand((2, 4, 16, 16), 3)
    for rho in (0.0, 0.25, 0.5, 1.0):
        bias = cd.record_bias(c, u, rho, 10)
        assert bias.recorded_step == 10 and bias.rho == rho
        np.testing.assert_allclose(cd.reconstruct_uncond(c, bias, 1.0, 1.0, rho), u, atol=1e-5)
    assert cd.enhancement_weights(600, 350, 0.2, 0.3) == (1.2, 1.0)
    assert cd.switch_timestep(667, 33, 0.5) == 350


def test_dynamic_reuse_is_exact_on_lines():
    prev = np.full((1, 1, 2, 2), 1.0, np.float32)
    last = np.full((1, 1, 2, 2), 1.5, np.float32)
    np.testing.assert_array_equal(cd.dynamic_reuse(last, prev, 0.5), np.full((1, 1, 2, 2), 1.75))
    assert cd.w_of(3, 3, 30, "linear") == 0.0
    assert cd.w_of(29, 3, 30, "linear") == 1.0


def test_plan_enumeration():
    plan = cd.build_plan(30)
    steps = plan["steps"]
    assert plan["cfg_start"] == 10
    assert plan["reconstructed_uncond_steps"] == 16
    assert [i for i, s in enumerate(steps) if s["record_cfg_bias"]] == [10, 15, 20, 25]
    assert all(not s["attn_reuse"] for s in steps[::2])
    only_cfg = cd.build_plan(30, "cfg_cache_only")
    assert not any(s["attn_reuse"] for s in only_cfg["steps"])
    assert cd.plan_csv(4, "no_cache").startswith(f"# schema_version: {cd.SCHEMA_VERSION}\n")
    custom = cd.build_plan(30, config={"cache": {"cfg_interval": 3}})
    assert [i for i, s in enumerate(custom["steps"]) if s["record_cfg_bias"]] == [10, 13, 16, 19, 22, 25, 28]


def test_metrics():
    a = rand((1, 1, 16, 16), 4)
    assert cd.mse(a, a) == 0.0
    assert cd.psnr(a, a) == float("inf")
    assert cd.ssim(a, a) == pytest.approx(1.0)
    assert cd.psnr(a, a + 0.1, 1.0) == pytest.approx(20.0, abs=1e-4)


def test_models_predict_and_count():
    x = rand((4, 4, 16, 16), 5)
    analytic = cd.Model()
    assert analytic.name and analytic.layer_count >= 1
    eps, _ = analytic.predict(x, 500, 1)
    assert eps.shape == x.shape and np.isfinite(eps).all()
    dit = cd.Model({"model": "tiny_dit"})
    eps, macs = dit.predict(x, 500, 1)
    assert eps.shape == x.shape
    assert macs == dit.mac_breakdown(x.shape)["full"]


def test_sample_and_reports(tmp_path):
    base = {"sampler": {"steps": 12}, "repetitions": 1}
    ref = cd.sample(base, "no_cache")
    fast = cd.sample(base, "fastercache")
    assert ref["x_final"].shape == (4, 4, 16, 16)
    assert len(fast["timesteps"]) == 13 and fast["timesteps"][-1] == 0
    assert sum(fast["step_macs"]) < sum(ref["step_macs"])

    report = cd.run(dict(base, strategy="fastercache"))
    assert report["schema_version"] == cd.SCHEMA_VERSION
    assert [e["strategy"] for e in report["entries"]] == ["no_cache", "fastercache"]
    fc = report["entries"][1]
    assert fc["macs"]["total"] == fc["macs"]["predicted"] < fc["macs"]["reference"]

    again = cd.run(dict(base, strategy="fastercache"))
    assert cd.strip_timing(again) == cd.strip_timing(report)

    ablation = cd.ablate(base)
    assert len(ablation["entries"]) == 7
    subset = cd.compare(base, ["dynamic_fr"])
    assert [e["strategy"] for e in subset["entries"]] == ["no_cache", "dynamic_fr"]
    swept = cd.sweep(base, "dfr_interval", [2, 4])
    assert swept["sweep_parameter"] == "dfr_interval"

    path = cd.write_report(report, tmp_path, "smoke")
    assert path.endswith("smoke.json") and (tmp_path / "smoke_summary.csv").exists()


def test_errors_are_python_exceptions():
    with pytest.raises(cd.ConfigError):
        cd.run({"sampler": {"stepz": 3}})
    with pytest.raises(ValueError):
        cd.build_plan(30, "bogus")
    with pytest.raises(cd.ShapeError):
        cd.fft2(np.zeros((4, 4), np.float32))
    with pytest.raises(ValueError):
        cd.record_bias(rand((1, 1, 4, 4), 0), rand((1, 1, 4, 8), 1))
