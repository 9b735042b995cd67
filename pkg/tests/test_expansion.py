import numpy as np
import pytest

from centerpolar import expansion as expansion_mod
from centerpolar.encoder import EncoderModel, Layer
from centerpolar.expansion import (
    ExpansionConfig,
    ExpansionDivergedError,
    expand_batch,
    expansion_trajectory,
)
from centerpolar.geometry import compute_centroids, geodesic_distance
from centerpolar.losses import LossConfig
from centerpolar.tensor import Tensor


def linear_encoder(W):
    W = np.asarray(W, dtype=np.float64)
    return EncoderModel(
        [
            Layer(
                weight=Tensor(W, requires_grad=True),
                bias=Tensor(np.zeros(W.shape[0]), requires_grad=True),
                activation="identity",
            )
        ]
    )


def test_config_validation_and_normalization():
    with pytest.raises(ValueError):
        ExpansionConfig(iterations_te=0)
    with pytest.raises(ValueError):
        ExpansionConfig(step_size=0.0)
    with pytest.raises(ValueError):
        ExpansionConfig(expansion_epochs=(0, 1))
    cfg = ExpansionConfig(expansion_epochs=(7, 1, 4, 1))
    assert cfg.expansion_epochs == (1, 4, 7)


def test_single_step_matches_analytic_gradient():
    # one gradient step on e = W x, hand-derived:
    #   g = W^T [ (mu_hat - c e_hat) / (pi sqrt(1-c^2) ||e||) + (e-mu)/||e-mu|| ]
    # for W=[[2,1],[0,1]], x0=[0.8,-0.3], mu=[0.5,0.4], margin 1, step 0.05
    model = linear_encoder([[2.0, 1.0], [0.0, 1.0]])
    cents = compute_centroids([(0, [0.5, 0.4])])
    out = expand_batch(
        [(7, np.array([0.8, -0.3]), 0)],
        model,
        cents,
        ExpansionConfig(iterations_te=1, step_size=0.05, expansion_epochs=(1,)),
        LossConfig(),
    )
    got = out.samples[0].features
    expected = np.array([0.71937755716666407, -0.31900966664231306])
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_expanded_set_provenance():
    model = linear_encoder(np.eye(2))
    cents = compute_centroids([(0, [1.0, 0.0]), (1, [0.0, 1.0])])
    batch = [
        (10, np.array([0.9, 0.1]), 0),
        (11, np.array([0.2, 1.1]), 1),
    ]
    out = expand_batch(batch, model, cents, ExpansionConfig(iterations_te=3), LossConfig())
    assert len(out) == 2
    for (sid, _x, cid), es in zip(batch, out.samples):
        assert es.source_id == sid
        assert es.class_id == cid
        assert es.domain_tag == "expanded"
        assert np.isfinite(es.features).all()


def test_model_untouched_by_expansion():
    model = EncoderModel.build([3, 4, 2], ["tanh", "identity"], seed=2)
    before = model.checksum()
    cents = compute_centroids([(0, [0.5, 0.5])])
    expand_batch(
        [(0, np.array([0.1, 0.2, 0.3]), 0)],
        model,
        cents,
        ExpansionConfig(iterations_te=5),
        LossConfig(),
    )
    assert model.checksum() == before


def test_expansion_deterministic_bitwise():
    model = EncoderModel.build([3, 4, 2], ["tanh", "identity"], seed=4)
    cents = compute_centroids([(0, [0.3, -0.4])])
    batch = [(0, np.array([0.5, -0.2, 0.8]), 0)]
    cfg = ExpansionConfig(iterations_te=8, step_size=5e-3)
    a = expand_batch(batch, model, cents, cfg, LossConfig())
    b = expand_batch(batch, model, cents, cfg, LossConfig())
    assert np.array_equal(a.samples[0].features, b.samples[0].features)


def test_samples_expand_independently():
    model = EncoderModel.build([2, 3, 2], ["tanh", "identity"], seed=6)
    cents = compute_centroids([(0, [0.4, 0.1]), (1, [-0.3, 0.5])])
    cfg = ExpansionConfig(iterations_te=4)
    b1 = [(0, np.array([0.7, 0.2]), 0)]
    b2 = [(1, np.array([-0.1, 0.6]), 1)]
    together = expand_batch(b1 + b2, model, cents, cfg, LossConfig())
    alone = [
        expand_batch(b1, model, cents, cfg, LossConfig()).samples[0],
        expand_batch(b2, model, cents, cfg, LossConfig()).samples[0],
    ]
    for t, a in zip(together.samples, alone):
        assert np.array_equal(t.features, a.features)


def test_centrifugal_ascent_small_steps():
    # With a small-gain encoder, a distant centroid, and a small starting
    # angle, the push away from the centroid outweighs the drift hinge
    # (angular rates 1/(pi ||e||) versus ||mu|| sin(psi) / ||mu - e||), so the
    # sphere distance must not decrease beyond tolerance at small steps.
    gen = np.random.default_rng(17)
    for _ in range(10):
        W = 0.15 * (np.eye(3) + 0.1 * gen.normal(size=(3, 3)))
        model = linear_encoder(W)
        x = gen.normal(size=3)
        e0 = W @ x
        e0_hat = e0 / np.linalg.norm(e0)
        perp = gen.normal(size=3)
        perp -= (perp @ e0_hat) * e0_hat
        perp /= np.linalg.norm(perp)
        mu = 3.0 * np.linalg.norm(e0) * (np.cos(0.17) * e0_hat + np.sin(0.17) * perp)
        cents = compute_centroids([(0, mu)])
        rows = expansion_trajectory(
            (x, 0),
            model,
            cents,
            ExpansionConfig(iterations_te=10, step_size=1e-3),
            LossConfig(),
        )
        assert rows[-1][1] >= rows[0][1] - 1e-6


def test_semantic_tether_linear_in_step_size():
    model = EncoderModel.build([3, 4, 2], ["tanh", "identity"], seed=9)
    cents = compute_centroids([(0, [0.6, -0.2])])
    x0 = np.array([0.4, 0.1, -0.5])

    def drift(step):
        out = expand_batch(
            [(0, x0, 0)],
            model,
            cents,
            ExpansionConfig(iterations_te=3, step_size=step),
            LossConfig(),
        )
        return np.linalg.norm(out.samples[0].features - x0)

    ratio = drift(1e-5) / drift(1e-6)
    assert ratio == pytest.approx(10.0, rel=1e-2)


def test_trajectory_length_and_initial_row():
    model = linear_encoder(np.eye(2))
    cents = compute_centroids([(0, [1.0, 0.0])])
    x0 = np.array([0.8, 0.4])
    cfg = ExpansionConfig(iterations_te=6, step_size=1e-2)
    rows = expansion_trajectory((x0, 0), model, cents, cfg, LossConfig(margin_m=1.0))
    assert len(rows) == 7
    assert [r[0] for r in rows] == list(range(7))
    it0, d_geo0, d_euc0, loss0 = rows[0]
    # before any update: sem term 0, hinge argument exactly the margin
    assert loss0 == pytest.approx(-d_geo0 + 1.0, abs=1e-12)
    assert d_euc0 == pytest.approx(np.linalg.norm([0.8, 0.4] - np.array([1.0, 0.0])), abs=1e-12)


def test_trajectory_zero_iterations_single_row():
    model = linear_encoder(np.eye(2))
    cents = compute_centroids([(0, [1.0, 0.0])])
    rows = expansion_trajectory(
        (np.array([0.5, 0.5]), 0),
        model,
        cents,
        ExpansionConfig(iterations_te=5),
        LossConfig(),
        iterations=0,
    )
    assert len(rows) == 1
    assert rows[0][0] == 0


def test_trajectory_consistent_with_expand_batch():
    model = EncoderModel.build([2, 3, 2], ["tanh", "identity"], seed=12)
    cents = compute_centroids([(0, [0.5, 0.3])])
    x0 = np.array([0.2, -0.7])
    cfg = ExpansionConfig(iterations_te=5, step_size=1e-2)
    rows = expansion_trajectory((x0, 0), model, cents, cfg, LossConfig())
    out = expand_batch([(0, x0, 0)], model, cents, cfg, LossConfig())
    e = model.forward(Tensor(out.samples[0].features), frozen=True)
    d_final = geodesic_distance(Tensor(cents.vector(0)), e).item()
    assert rows[-1][1] == pytest.approx(d_final, abs=1e-15)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_divergence_names_sample_and_iteration():
    # an absurd step size launches the iterate out of the representable range
    model = linear_encoder(np.eye(2))
    cents = compute_centroids([(0, [1.0, 0.0])])
    with pytest.raises(ExpansionDivergedError) as exc:
        expand_batch(
            [(42, np.array([0.5, 0.5]), 0)],
            model,
            cents,
            ExpansionConfig(iterations_te=10, step_size=1e155),
            LossConfig(),
        )
    msg = str(exc.value)
    assert "42" in msg and "iteration" in msg


def test_call_counter():
    expansion_mod.reset_call_counts()
    model = linear_encoder(np.eye(2))
    cents = compute_centroids([(0, [1.0, 0.0])])
    expand_batch(
        [(0, np.array([0.5, 0.5]), 0)], model, cents, ExpansionConfig(iterations_te=1), LossConfig()
    )
    assert expansion_mod.CALL_COUNTS["expand_batch"] == 1
    expansion_mod.reset_call_counts()
    assert expansion_mod.CALL_COUNTS["expand_batch"] == 0
