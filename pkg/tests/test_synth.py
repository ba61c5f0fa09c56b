import numpy as np
import pytest

from cnvae_ecg.ecg import expand_to_twelve, read_dataset
from cnvae_ecg.errors import ContractError
from cnvae_ecg.synth import (BeatTemplate, ClassSpec, OracleGenerator, Wave, default_class_specs, detect_beats,
                             make_template, synth_dataset, synth_record, synth_records)


def clean(rate):
    return ClassSpec("c", make_template(rate, jitter=0.0, noise_std=0.0))


class TestTemplates:
    def test_centers_must_increase(self):
        waves = tuple(Wave(0.1, c, 0.02) for c in (0.1, 0.3, 0.2, 0.5, 0.7))
        with pytest.raises(ContractError, match="increasing"):
            BeatTemplate(waves, 60)

    @pytest.mark.parametrize("rate", [10, 400])
    def test_rate_range(self, rate):
        with pytest.raises(ContractError, match="heart rate"):
            make_template(rate)

    def test_projection_not_all_zero(self):
        with pytest.raises(ContractError):
            ClassSpec("z", make_template(60), projection=(0.0,) * 8)

    def test_shorter_than_one_beat(self):
        with pytest.raises(ContractError, match="beat interval"):
            synth_record(clean(30), 100, 1.0, 0)


class TestBeats:
    def test_sixty_bpm_ten_seconds(self):
        rec = synth_record(clean(60), 500, 10.0, 0)
        assert detect_beats(rec.leads["V4"], 500) == 10

    def test_hundred_fifty_bpm(self):
        rec = synth_record(ClassSpec("p", make_template(150)), 500, 10.0, 1)
        assert abs(detect_beats(rec.leads["V4"], 500) - 25) <= 1

    def test_noisy_hundred_twenty(self):
        spec = ClassSpec("n", make_template(120, noise_std=0.05))
        for seed in range(5):
            rec = synth_record(spec, 500, 10.0, seed)
            assert abs(detect_beats(rec.leads["V4"], 500) - 20) <= 1

    def test_flat_signal(self):
        assert detect_beats(np.zeros(1000), 500) == 0

    def test_class_statistics_differ(self):
        specs = default_class_specs()
        counts = [[detect_beats(synth_record(s, 100, 5.12, [7, i]).leads["V4"], 100) for i in range(100)]
                  for s in specs]
        a, b = np.array(counts[0], float), np.array(counts[1], float)
        se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
        assert b.mean() - a.mean() > 3 * max(se, 1e-12)


class TestRecords:
    def test_same_seed_identical(self):
        a, b = synth_record(clean(72), 250, 4.0, 5), synth_record(clean(72), 250, 4.0, 5)
        assert np.array_equal(a.to_array(), b.to_array())

    def test_projection_scales_leads(self):
        rec = synth_record(clean(60), 200, 3.0, 0)
        np.testing.assert_allclose(rec.leads["V4"] * 0.6, rec.leads["I"], atol=1e-15)

    def test_expandable(self):
        rec = synth_record(ClassSpec("p", make_template(90)), 100, 3.0, 0)
        assert expand_to_twelve(rec).n_leads == 12

    def test_independent_seeds(self):
        ds = synth_records([(default_class_specs()[0], 3)], 100, 2.0, 0)
        assert not np.array_equal(ds.records[0].to_array(), ds.records[1].to_array())


class TestDatasetFile:
    def test_empty(self, tmp_path):
        specs = default_class_specs()
        synth_dataset([(specs[0], 0), (specs[1], 0)], 100, 1.0, 0, tmp_path / "e.ecg8")
        ds = read_dataset(tmp_path / "e.ecg8")
        assert len(ds) == 0 and ds.vocabulary.names == ("normal", "pathological")

    def test_counts_read_back(self, tmp_path):
        specs = default_class_specs()
        synth_dataset([(specs[0], 900), (specs[1], 100)], 50, 1.28, 0, tmp_path / "i.ecg8")
        assert read_dataset(tmp_path / "i.ecg8").class_counts() == [900, 100]

    def test_write_read_exact(self, tmp_path):
        specs = default_class_specs()
        ds = synth_dataset([(specs[0], 3), (specs[1], 2)], 100, 2.0, 4, tmp_path / "d.ecg8")
        back = read_dataset(tmp_path / "d.ecg8")
        for a, b in zip(ds.records, back.records):
            assert np.array_equal(a.to_array().astype(np.float32), b.to_array())
            assert a.labels == b.labels

    def test_io_error_names_path(self, tmp_path):
        (tmp_path / "blocker").write_text("a file, not a directory")
        with pytest.raises(OSError, match="blocker"):
            synth_dataset([(default_class_specs()[0], 1)], 100, 2.0, 0, tmp_path / "blocker" / "x.ecg8")

    def test_negative_count(self, tmp_path):
        with pytest.raises(ContractError):
            synth_records([(default_class_specs()[0], -1)], 100, 2.0, 0)


class TestOracleGenerator:
    def test_labels_and_flag(self):
        specs = default_class_specs()
        from cnvae_ecg.ecg import ClassVocabulary
        gen = OracleGenerator(specs, ClassVocabulary(("normal", "pathological")), 100, 2.0)
        recs = gen(2, 3, seed=1)
        assert len(recs) == 3 and all(r.labels == 2 and r.generated for r in recs)
        with pytest.raises(ContractError):
            gen(3, 1, seed=0)
