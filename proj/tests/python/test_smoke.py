import numpy as np
import pytest

import pycdcn


def smooth(h, w, seed=0):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w]
    f = 0.05 + 0.1 * rng.random(3)
    img = np.stack([0.5 + 0.3 * np.sin(f[c] * x + f[(c + 1) % 3] * y) for c in range(3)], axis=-1)
    return np.ascontiguousarray(img)


def test_kernels():
    k = pycdcn.isotropic_gaussian(1.5)
    assert k.shape == (21, 21)
    assert abs(k.sum() - 1.0) < 1e-12
    np.testing.assert_array_equal(k, k.T)
    a = pycdcn.anisotropic_gaussian(2.0, 2.0, 0.7, size=21)
    np.testing.assert_allclose(a, pycdcn.isotropic_gaussian(2.0), atol=1e-12)
    assert pycdcn.bicubic_kernel(3).shape == (13, 13)
    w = pycdcn.gaussian8_widths(2)
    assert len(w) == 8 and w[0] < w[-1]
    with pytest.raises(ValueError):
        pycdcn.isotropic_gaussian(-1.0)


def test_degrade_and_decompose():
    hr = smooth(32, 36)
    k = pycdcn.isotropic_gaussian(1.2)
    lr = pycdcn.degrade(hr, k, 2)
    assert lr.shape == (16, 18, 3)
    s, d, lr2 = pycdcn.decompose_labels(hr, k, 2)
    np.testing.assert_array_equal(lr, lr2)
    np.testing.assert_allclose(s + d, hr, atol=1e-12)
    up = pycdcn.bicubic_resize(lr, 32, 36)
    assert up.shape == hr.shape


def test_metrics():
    a = np.random.default_rng(1).random((20, 20))
    assert abs(pycdcn.psnr_y(a, a + 1 / 255) - 48.1308) < 1e-3
    assert pycdcn.psnr_y(a, a) == 100.0
    rgb = smooth(24, 24)
    assert abs(pycdcn.ssim_y(rgb, rgb) - 1.0) < 1e-12


def test_model_forward_and_checkpoint(tmp_path):
    assert pycdcn.param_count() == 11886697
    m = pycdcn.Model.create(1, 1, 4, 2, reduction=2, seed=3)
    assert m.scale == 2
    assert m.num_params == pycdcn.param_count(1, 1, 4, 2, 2)
    out = m(smooth(10, 12))
    assert out["sr"].shape == (20, 24, 3)
    assert out["structure"].shape == (20, 24, 3)
    assert out["detail"].shape == (20, 24, 3)
    path = tmp_path / "m.cdcn"
    m.save(path)
    m2 = pycdcn.Model.load(path)
    np.testing.assert_allclose(m2(smooth(10, 12))["sr"], out["sr"], atol=1e-4)
    single = pycdcn.Model.create(1, 1, 4, 2, reduction=2, ablation="no_decomposition")
    o = single(smooth(10, 12))
    assert o["structure"] is None and o["detail"] is None


def test_train_and_evaluate(tmp_path):
    from PIL import Image

    data = tmp_path / "data"
    data.mkdir()
    for i in range(2):
        Image.fromarray((smooth(40, 44, i) * 255).round().astype(np.uint8)).save(data / f"im{i}.png")
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "scale = 2\npatch_size = 12\nbatch_size = 2\ntotal_iters = 2\nlr_init = 1e-3\n"
        "lr_halve_every = 10\nwidth_range = 0.2 2.0\nseed = 1\ncheckpoint_every = 2\n"
        "num_groups = 1\nblocks_per_group = 1\nchannels = 4\nca_reduction = 2\n"
    )
    ckpts = pycdcn.train(str(cfg), str(data), str(tmp_path / "run"), {"seed": "2"})
    assert [p.name for p in ckpts] == ["checkpoint_0000000.cdcn", "checkpoint_0000002.cdcn"]
    rep = pycdcn.evaluate_bicubic(str(data), 2)
    assert len(rep["rows"]) == 16
    assert np.isclose(rep["mean_psnr"], np.mean([r[2] for r in rep["rows"]]))
    with pytest.raises(ValueError):
        pycdcn.train(str(cfg), str(data), str(tmp_path / "bad"), {"loss_toggles": "none"})
