import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cnvae_ecg import dlm
from cnvae_ecg.autograd import Tensor, grad_check, no_grad
from cnvae_ecg.ecg import ClassVocabulary, limb_residuals
from cnvae_ecg.errors import ContractError, NumericError
from cnvae_ecg.model import (CheckpointError, ConditionalVAE, ModelCheckpoint, ModelConfig, TrainConfig,
                             TrainingDiverged, elbo_loss, gaussian_kl, generate, kl_weight_at,
                             prepare_records, residual_kl, train)
from cnvae_ecg.synth import default_class_specs, synth_records

TINY = dict(scales=2, groups_per_scale=(1, 2), latent_channels=2, width=8, kernel=3, n_components=2,
            length=64, embed_dim=6, top_dim=6)


def tiny_config(**kw):
    return ModelConfig(**{**TINY, **kw})


def randomize(model, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data = rng.normal(size=p.shape) * scale
    return model


@pytest.fixture(scope="module")
def tiny_data():
    specs = default_class_specs()
    return synth_records([(specs[0], 3), (specs[1], 3)], 50, 1.28, 3)


@pytest.fixture(scope="module")
def tiny_checkpoint(tiny_data):
    return train(tiny_data.records, tiny_data.vocabulary, tiny_config(), TrainConfig(epochs=6, batch_size=4, seed=1))


class TestConfig:
    def test_defaults_are_desk_scale(self):
        cfg = ModelConfig()
        assert (cfg.scales, cfg.groups_per_scale, cfg.width, cfg.length) == (3, (2, 3, 4), 32, 512)

    def test_full_sizes_expressible(self):
        cfg = ModelConfig.full_scale()
        assert cfg.groups_per_scale == (5, 10, 20) and cfg.width == 12 and cfg.cells_per_group == 4

    @pytest.mark.parametrize("kw", [dict(scales=2), dict(groups_per_scale=(2, 0, 4)), dict(width=0),
                                    dict(length=510), dict(bits=0)])
    def test_invalid(self, kw):
        with pytest.raises(ContractError):
            ModelConfig(**kw)

    def test_divisibility_message(self):
        with pytest.raises(ContractError, match="divisible by 2\\*\\*\\(scales-1\\) = 4"):
            ModelConfig(length=510)

    def test_dict_round_trip(self):
        cfg = tiny_config()
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ContractError, match="unknown"):
            ModelConfig.from_dict({**cfg.to_dict(), "depth": 3})


class TestCondition:
    def model(self):
        return ConditionalVAE(tiny_config(n_classes=4))

    def test_empty_mask_is_zero(self):
        assert np.all(self.model().embed_condition(0).data == 0)

    def test_single_class_is_row(self):
        m = self.model()
        assert np.array_equal(m.embed_condition(1 << 2).data[0], m.embedding.data[2])

    def test_sum_of_rows(self):
        m = self.model()
        rows = m.embedding.data
        np.testing.assert_array_equal(m.embed_condition(0b1010).data[0], rows[1] + rows[3])

    def test_out_of_vocabulary(self):
        with pytest.raises(ContractError, match="outside"):
            self.model().embed_condition(1 << 4)

    def test_differentiable_wrt_table(self):
        m = self.model()
        m.embed_condition([0b0101, 0b0100]).sum().backward()
        np.testing.assert_array_equal(m.embedding.grad[:, 0], [1, 0, 2, 0])


class TestEncoder:
    def test_zero_input_deterministic(self):
        m = ConditionalVAE(tiny_config())
        c = m.embed_condition([0])
        a = m.encode(Tensor(np.zeros((1, 8, 64))), c)
        b = m.encode(Tensor(np.zeros((1, 8, 64))), c)
        assert all(np.all(np.isfinite(x.data)) and np.array_equal(x.data, y.data) for x, y in zip(a, b))

    def test_condition_reaches_encoder(self):
        m = ConditionalVAE(tiny_config())
        x = Tensor(np.random.default_rng(0).uniform(-1, 1, (1, 8, 64)))
        a = m.encode(x, m.embed_condition([1]))
        b = m.encode(x, m.embed_condition([2]))
        assert np.all(a[-1].data != b[-1].data)

    def test_coarsest_length(self):
        m = ConditionalVAE(ModelConfig(length=256, width=4, latent_channels=2, n_components=1))
        feats = m.encode(Tensor(np.zeros((1, 8, 256))), m.embed_condition([0]))
        assert feats[0].shape[2] == 64 and feats[-1].shape[2] == 256
        assert len(feats) == 9

    def test_incompatible_length(self):
        m = ConditionalVAE(tiny_config())
        with pytest.raises(ContractError, match="divisible"):
            m.encode(Tensor(np.zeros((1, 8, 63))), m.embed_condition([0]))


class TestKL:
    def test_unit_shift_is_half(self):
        assert gaussian_kl(1.0, 0.0, 0.0, 0.0) == pytest.approx(0.5, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-3, 3), st.floats(-2, 2))
    def test_matches_closed_form(self, mq, lq, mp, lp):
        sq, sp = np.exp(lq), np.exp(lp)
        expected = np.log(sp / sq) + (sq ** 2 + (mq - mp) ** 2) / (2 * sp ** 2) - 0.5
        assert gaussian_kl(mq, lq, mp, lp) == pytest.approx(expected, rel=1e-9, abs=1e-9)
        assert gaussian_kl(mq, lq, mp, lp) >= -1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2))
    def test_residual_form(self, dm, dl, lp):
        a = residual_kl(Tensor(dm), Tensor(dl), Tensor(lp)).item()
        assert a == pytest.approx(gaussian_kl(dm, lp + dl, 0.0, lp), rel=1e-9, abs=1e-12)


class TestTopDown:
    def test_zero_deltas_give_zero_kl(self):
        m = randomize(ConditionalVAE(tiny_config()))
        for g in m.dec:
            g.posterior.weight.data[...] = 0
            g.posterior.bias.data[...] = 0
        x = np.random.default_rng(1).uniform(-1, 1, (3, 8, 64))
        hier, _ = m.reconstruct_head(Tensor(x), [1, 2, 0], np.random.default_rng(0))
        for g in hier.groups:
            assert np.abs(g.kl.data).max() <= 1e-9
            np.testing.assert_array_equal(g.post_mu.data, g.prior_mu.data)

    def test_kl_nonnegative_random_params(self):
        m = randomize(ConditionalVAE(tiny_config()), scale=0.5)
        x = np.random.default_rng(2).uniform(-1, 1, (4, 8, 64))
        hier, _ = m.reconstruct_head(Tensor(x), [1, 2, 1, 2], np.random.default_rng(0))
        assert all(g.kl.data.min() >= -1e-9 for g in hier.groups)
        assert sum(g.kl.data.sum() for g in hier.groups) > 0

    def test_generate_deterministic(self):
        m = randomize(ConditionalVAE(tiny_config()))
        h1, r1 = m.generate_head([1, 2], np.random.default_rng(7), 0.8)
        h2, r2 = m.generate_head([1, 2], np.random.default_rng(7), 0.8)
        assert np.array_equal(r1.data, r2.data)
        assert all(np.array_equal(a.z.data, b.z.data) for a, b in zip(h1.groups, h2.groups))

    def test_shapes_consistent(self):
        m = ConditionalVAE(tiny_config())
        x = Tensor(np.zeros((2, 8, 64)))
        hier, raw = m.reconstruct_head(x, [1, 2], np.random.default_rng(0))
        assert raw.shape == (2, 33 * 2, 64)
        assert [g.z.shape[2] for g in hier.groups] == [32, 64, 64]
        for g in hier.groups:
            assert g.prior_mu.shape == g.post_mu.shape == g.z.shape == g.prior_log_sigma.shape

    def test_head_starts_at_unit_scale(self):
        m = ConditionalVAE(tiny_config())
        _, raw = m.generate_head([1], np.random.default_rng(0))
        assert np.all(raw.data == 0)

    def test_mode_contracts(self):
        m = ConditionalVAE(tiny_config())
        c = m.embed_condition([1])
        feats = m.encode(Tensor(np.zeros((1, 8, 64))), c)
        with pytest.raises(ContractError):
            m.top_down(None, c, "train")
        with pytest.raises(ContractError):
            m.top_down(feats, c, "generate")
        with pytest.raises(ContractError, match="levels"):
            m.top_down(feats[:2], c, "train")
        with pytest.raises(ContractError, match="group 1"):
            m.top_down([feats[0], feats[0], feats[2]], c, "train")


class TestElbo:
    def setup_method(self):
        self.model = randomize(ConditionalVAE(tiny_config()), scale=0.2)
        self.bins = np.random.default_rng(3).integers(0, 256, (2, 8, 64))

    def test_zero_weight_is_nll(self):
        t = elbo_loss(self.model, self.bins, [1, 2], 0.0, np.random.default_rng(0))
        assert t.total.item() == t.nll.data.mean()

    def test_recomposition(self):
        t = elbo_loss(self.model, self.bins[:1], [1], 0.7, np.random.default_rng(0))
        hand = t.nll.data[0] + 0.7 * sum(k.data[0] for k in t.kl)
        assert abs(t.total.item() - hand) < 1e-10

    def test_zero_kl_total_is_nll(self):
        for g in self.model.dec:
            g.posterior.weight.data[...] = 0
            g.posterior.bias.data[...] = 0
        t = elbo_loss(self.model, self.bins, [1, 2], 1.0, np.random.default_rng(0))
        assert t.total.item() == pytest.approx(t.nll.data.mean(), rel=0, abs=1e-9)

    def test_weight_range(self):
        with pytest.raises(ContractError):
            elbo_loss(self.model, self.bins, [1, 2], 1.5, np.random.default_rng(0))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_names_term(self):
        self.model.head.bias.data[:] = np.nan
        with pytest.raises(NumericError, match="record 0, timestep 0"):
            elbo_loss(self.model, self.bins, [1, 2], 1.0, np.random.default_rng(0))

    def test_schedule(self):
        assert [kl_weight_at(e, 5) for e in (0, 2.5, 5, 9)] == [0.0, 0.5, 1.0, 1.0]

    def test_gradient(self):
        params = self.model.parameters()

        def loss(*_):
            return elbo_loss(self.model, self.bins, [1, 2], 0.6, np.random.default_rng(11)).total

        assert grad_check(loss, params, eps=1e-6, coords=3) < 1e-4


class TestTraining:
    def test_overfit_single_record(self, tiny_data):
        rec = tiny_data.records[:1]
        ck = train(rec, tiny_data.vocabulary, tiny_config(), TrainConfig(epochs=50, seed=0))
        assert len(ck.history) == 50
        assert ck.history[-1]["nll"] < ck.history[0]["nll"]

    def test_reconstruction_improves(self, tiny_data, tiny_checkpoint):
        cfg = tiny_checkpoint.config
        data = prepare_records(tiny_data.records[:1], cfg, tiny_checkpoint.normalizer)
        fresh = ConditionalVAE(cfg, seed=1)
        with no_grad():
            before = elbo_loss(fresh, data.bins, data.labels, 1.0, np.random.default_rng(0)).nll.item()
            after = elbo_loss(tiny_checkpoint.build_model(), data.bins, data.labels, 1.0,
                              np.random.default_rng(0)).nll.item()
        assert after < before

    def test_deterministic(self, tiny_data, tiny_checkpoint):
        again = train(tiny_data.records, tiny_data.vocabulary, tiny_config(),
                      TrainConfig(epochs=6, batch_size=4, seed=1))
        assert again.history == tiny_checkpoint.history
        assert again.to_bytes() == tiny_checkpoint.to_bytes()

    def test_kl_nonnegative_throughout(self, tiny_checkpoint):
        assert all(row["kl_min"] >= -1e-9 for row in tiny_checkpoint.history)

    def test_empty_dataset(self, tiny_data):
        with pytest.raises(ContractError, match="empty"):
            train([], tiny_data.vocabulary, tiny_config())

    def test_wrong_length(self, tiny_data):
        with pytest.raises(ContractError, match="length"):
            train(tiny_data.records, tiny_data.vocabulary, tiny_config(length=128))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_keeps_history(self, tiny_data):
        with pytest.raises(TrainingDiverged) as info:
            train(tiny_data.records, tiny_data.vocabulary, tiny_config(),
                  TrainConfig(epochs=20, batch_size=6, learning_rate=1e200, warmup_epochs=0))
        assert isinstance(info.value.history, list)


class TestGenerate:
    def test_count_zero(self, tiny_checkpoint):
        assert generate(tiny_checkpoint, 1, 0) == []

    def test_lead_physics_and_tags(self, tiny_checkpoint):
        recs = generate(tiny_checkpoint, 2, 5, seed=3)
        assert len(recs) == 5
        for r in recs:
            assert r.n_leads == 12 and r.labels == 2 and r.generated
            assert max(limb_residuals(r).values()) <= 1e-9

    def test_vocabulary_mismatch(self, tiny_checkpoint):
        with pytest.raises(ContractError):
            generate(tiny_checkpoint, 1, 2, vocabulary=ClassVocabulary(("a", "b", "c")))
        with pytest.raises(ContractError):
            generate(tiny_checkpoint, 1 << 3, 2)

    def test_condition_changes_head(self, tiny_checkpoint):
        m = tiny_checkpoint.build_model()
        with no_grad():
            _, a = m.generate_head([1] * 4, np.random.default_rng(0))
            _, b = m.generate_head([2] * 4, np.random.default_rng(0))
        assert np.all(np.abs(a.data - b.data).max(axis=(1, 2)) > 0)

    def test_seeded(self, tiny_checkpoint):
        a = generate(tiny_checkpoint, 1, 3, tau=0.7, seed=9)
        b = generate(tiny_checkpoint, 1, 3, tau=0.7, seed=9)
        assert all(np.array_equal(x.to_array(), y.to_array()) for x, y in zip(a, b))


class TestCheckpoint:
    def test_byte_exact_round_trip(self, tiny_checkpoint, tmp_path):
        path = tiny_checkpoint.save(tmp_path / "m.cnv")
        loaded = ModelCheckpoint.load(path)
        assert loaded.to_bytes() == path.read_bytes()
        assert loaded.history == tiny_checkpoint.history and loaded.config == tiny_checkpoint.config

    def test_generate_after_load(self, tiny_checkpoint, tmp_path):
        before = generate(tiny_checkpoint, 1, 4, seed=5)
        loaded = ModelCheckpoint.load(tiny_checkpoint.save(tmp_path / "m.cnv"))
        after = generate(loaded, 1, 4, seed=5)
        assert all(np.array_equal(x.to_array(), y.to_array()) for x, y in zip(before, after))

    def test_holds_embedding_and_top(self, tiny_checkpoint):
        assert "embedding" in tiny_checkpoint.params and "top" in tiny_checkpoint.params

    @pytest.mark.parametrize("mangle", [lambda b: b"XXXX" + b[4:], lambda b: b[:-5], lambda b: b + b"\0"])
    def test_corrupt(self, tiny_checkpoint, mangle):
        with pytest.raises(CheckpointError):
            ModelCheckpoint.from_bytes(mangle(tiny_checkpoint.to_bytes()))
