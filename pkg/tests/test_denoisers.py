"""Analytic mixture denoiser, the small conv net, and their serialization.

The mixture denoiser has closed forms to pin down exactly; the conv net is
checked by finite differences and by its training loss actually falling.
"""

import numpy as np
import pytest

import postcast as pc
from postcast.denoisers import GaussianMixtureModel, denoiser_loss_and_grads


def standard_prior(shape=(4, 4)):
    """Single zero-mean unit-variance component."""
    return GaussianMixtureModel(
        weights=np.array([1.0]),
        means=np.zeros((1,) + shape),
        sigmas=np.array([1.0]),
    )


def test_standard_prior_posterior_mean_is_a_shrink():
    """With m = 0, sigma = 1: E[x0 | x_t] = sqrt(abar) x_t exactly."""
    sch = pc.linear_schedule(50, 1e-4, 0.05)
    rng = np.random.default_rng(0)
    gmm = standard_prior()
    for t in (1, 10, 50):
        x_t = pc.Field(rng.standard_normal((4, 4)), pc.MODEL_UNITS)
        post = pc.gmm_posterior_mean(gmm, sch, x_t, t)
        expected = np.sqrt(sch.alpha_bar(t)) * x_t.values
        assert np.allclose(post.values, expected, atol=1e-12)


def test_standard_prior_noise_prediction_closed_form():
    """The implied noise estimate is sqrt(1 - abar) x_t."""
    sch = pc.linear_schedule(50, 1e-4, 0.05)
    rng = np.random.default_rng(1)
    gmm = standard_prior()
    for t in (1, 25, 50):
        x_t = pc.Field(rng.standard_normal((4, 4)), pc.MODEL_UNITS)
        eps = pc.gmm_predict_noise(gmm, sch, x_t, t)
        expected = np.sqrt(1.0 - sch.alpha_bar(t)) * x_t.values
        assert np.allclose(eps.values, expected, atol=1e-12)
    with pytest.raises(pc.StepRangeError):
        pc.gmm_predict_noise(gmm, sch, x_t, 0)


def test_near_delta_prior_pulls_to_its_mean():
    """A tiny-variance component dominates the posterior regardless of x_t."""
    sch = pc.linear_schedule(50, 1e-4, 0.05)
    mean = np.full((4, 4), 0.3)
    gmm = GaussianMixtureModel(
        weights=np.array([1.0]), means=mean[None], sigmas=np.array([1e-6])
    )
    x_t = pc.Field(np.full((4, 4), -5.0), pc.MODEL_UNITS)
    post = pc.gmm_posterior_mean(gmm, sch, x_t, 40)
    assert np.allclose(post.values, mean, atol=1e-3)


def test_responsibilities_pick_the_nearest_component():
    sch = pc.linear_schedule(50, 1e-4, 0.02)
    means = np.stack([np.full((3, 3), -0.8), np.full((3, 3), 0.8)])
    gmm = GaussianMixtureModel(
        weights=np.array([0.5, 0.5]), means=means, sigmas=np.array([0.05, 0.05])
    )
    near_second = pc.Field(np.full((3, 3), 0.78), pc.MODEL_UNITS)
    post = pc.gmm_posterior_mean(gmm, sch, near_second, 1)
    assert np.allclose(post.values, 0.8, atol=0.03)


def test_gmm_posterior_mean_validates_inputs():
    sch = pc.linear_schedule(10)
    gmm = standard_prior((4, 4))
    with pytest.raises(pc.ShapeError):
        pc.gmm_posterior_mean(gmm, sch, pc.Field(np.zeros((5, 5)), pc.MODEL_UNITS), 1)
    with pytest.raises(pc.UnitsError):
        pc.gmm_posterior_mean(gmm, sch, pc.Field(np.zeros((4, 4))), 1)


def test_gmm_sample_statistics():
    rng = np.random.default_rng(5)
    means = np.stack([np.full((2, 2), -1.0), np.full((2, 2), 1.0)])
    gmm = GaussianMixtureModel(
        weights=np.array([0.25, 0.75]), means=means, sigmas=np.array([0.01, 0.01])
    )
    draws = np.array([pc.gmm_sample(gmm, rng).values.mean() for _ in range(2000)])
    assert (draws > 0).mean() == pytest.approx(0.75, abs=0.03)


def test_conv_denoiser_gradients_match_finite_differences():
    """Probe weight, bias, and time-bias entries in every layer; h = 1e-4."""
    net = pc.init_conv_denoiser(channels=(4,), kernel_size=3, seed=0)
    rng = np.random.default_rng(3)
    x = rng.standard_normal((8, 8))
    target = rng.standard_normal((8, 8))
    _, grads = denoiser_loss_and_grads(net, x, 0.4, target)
    h = 1e-4
    for li, layer in enumerate(net.layers):
        w = layer.weights
        probes = [(0, 0, 0, 0), (w.shape[0] - 1, w.shape[1] - 1, 1, 2)]
        for idx in probes:
            orig = w[idx]
            w[idx] = orig + h
            up, _ = denoiser_loss_and_grads(net, x, 0.4, target)
            w[idx] = orig - h
            down, _ = denoiser_loss_and_grads(net, x, 0.4, target)
            w[idx] = orig
            fd = (up - down) / (2 * h)
            assert grads[li].weights[idx] == pytest.approx(fd, rel=1e-3, abs=1e-10)
        for name in ("bias", "time_bias"):
            arr = getattr(layer, name)
            orig = arr[0]
            arr[0] = orig + h
            up, _ = denoiser_loss_and_grads(net, x, 0.4, target)
            arr[0] = orig - h
            down, _ = denoiser_loss_and_grads(net, x, 0.4, target)
            arr[0] = orig
            fd = (up - down) / (2 * h)
            assert getattr(grads[li], name)[0] == pytest.approx(fd, rel=1e-3, abs=1e-10)


def test_init_conv_denoiser_validation():
    with pytest.raises(pc.ParameterError):
        pc.init_conv_denoiser(channels=())
    with pytest.raises(pc.ParameterError):
        pc.init_conv_denoiser(channels=(0,))
    with pytest.raises(pc.ParameterError):
        pc.init_conv_denoiser(kernel_size=4)


def test_training_reduces_the_noise_matching_loss():
    fields = pc.generate_fields(pc.FieldSpec(height=16, width=16, seed=21), 16)
    model_fields = [pc.to_model(f) for f in fields]
    sch = pc.linear_schedule(40, 1e-4, 0.05)
    net, trace = pc.train_conv_denoiser(model_fields, sch, pc.TrainConfig(epochs=8, seed=0))
    assert len(trace) == 8
    assert trace[-1] < 0.75 * trace[0]
    assert net.parameter_count > 0


def test_training_rejects_empty_and_misunit_datasets():
    sch = pc.linear_schedule(10)
    with pytest.raises(pc.DataError):
        pc.train_conv_denoiser([], sch)
    data_field = pc.Field(np.zeros((4, 4)), pc.DATA_UNITS)
    with pytest.raises(pc.UnitsError):
        pc.train_conv_denoiser([data_field], sch)


def test_denoiser_blob_round_trip_is_float32_faithful(tmp_path):
    """Parameters are stored as f32; a second trip is bitwise stable."""
    net = pc.init_conv_denoiser(channels=(4,), kernel_size=3, seed=7)
    p1 = tmp_path / "net.pcdn"
    pc.save_denoiser(p1, net)
    loaded = pc.load_denoiser(p1)
    for orig, back in zip(net.layers, loaded.layers):
        assert np.array_equal(back.weights, orig.weights.astype(np.float32).astype(np.float64))
        assert np.array_equal(back.bias, orig.bias.astype(np.float32).astype(np.float64))
    p2 = tmp_path / "net2.pcdn"
    pc.save_denoiser(p2, loaded)
    assert p1.read_bytes() == p2.read_bytes()
    again = pc.load_denoiser(p2)
    sch = pc.linear_schedule(10)
    x = pc.Field(np.linspace(-1, 1, 16).reshape(4, 4), pc.MODEL_UNITS)
    assert np.array_equal(
        again.predict_noise(x, 5, sch).values, loaded.predict_noise(x, 5, sch).values
    )


def test_gmm_blob_round_trip_is_bitwise(tmp_path):
    fields = pc.generate_fields(pc.FieldSpec(height=8, width=8, seed=5), 12)
    gmm = pc.fit_gmm_prior(fields, 3, iters=10, seed=2)
    path = tmp_path / "prior.pcgm"
    pc.save_gmm(path, gmm)
    back = pc.load_gmm(path)
    assert np.array_equal(back.weights, gmm.weights)
    assert np.array_equal(back.means, gmm.means)
    assert np.array_equal(back.sigmas, gmm.sigmas)


def test_blob_loaders_reject_corrupt_files(tmp_path):
    bad = tmp_path / "bad.pcdn"
    bad.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(pc.MagicError):
        pc.load_denoiser(bad)
    with pytest.raises(pc.MagicError):
        pc.load_gmm(bad)

    net = pc.init_conv_denoiser(seed=0)
    whole = tmp_path / "net.pcdn"
    pc.save_denoiser(whole, net)
    cut = tmp_path / "cut.pcdn"
    cut.write_bytes(whole.read_bytes()[:40])
    with pytest.raises(pc.TruncationError):
        pc.load_denoiser(cut)

    fields = pc.generate_fields(pc.FieldSpec(height=4, width=4, seed=1), 4)
    gmm = pc.fit_gmm_prior(fields, 2, iters=2, seed=0)
    gpath = tmp_path / "prior.pcgm"
    pc.save_gmm(gpath, gmm)
    gcut = tmp_path / "cut.pcgm"
    gcut.write_bytes(gpath.read_bytes()[:24])
    with pytest.raises(pc.TruncationError):
        pc.load_gmm(gcut)


def test_ancestral_sampling_reproduces_the_mixture():
    """Unguided reverse runs under the analytic prior land on the mixture.

    Two well-separated components; 2000 seeded runs recover the weights to
    3% and the component means to 2e-2.
    """
    shape = (6, 6)
    means = np.stack([np.full(shape, -0.55), np.full(shape, 0.45)])
    gmm = GaussianMixtureModel(
        weights=np.array([0.5, 0.5]), means=means, sigmas=np.array([0.08, 0.08])
    )
    sch = pc.linear_schedule(25, 1e-4, 0.25)
    assert sch.alpha_bar(25) < 0.05  # enough noising to forget the start
    n = 2000
    sample_means = np.empty(n)
    for i in range(n):
        s = pc.unguided_sample(sch, gmm, *shape, seed=10_000 + i)
        sample_means[i] = s.values.mean()
    near_second = np.abs(sample_means - 0.45) < np.abs(sample_means + 0.55)
    assert near_second.mean() == pytest.approx(0.5, abs=0.03)
    assert sample_means[~near_second].mean() == pytest.approx(-0.55, abs=0.02)
    assert sample_means[near_second].mean() == pytest.approx(0.45, abs=0.02)
