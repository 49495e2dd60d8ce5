import json
from pathlib import Path

import pytest

from facevoice import data as datamod
from facevoice import model as modelmod
from facevoice import runs
from facevoice.errors import InvalidArgumentError
from facevoice.metrics import load_report_json

from conftest import SMALL_SPEC


def small_cfg(dataset_dir, out_dir, **overrides):
    base = dict(
        dataset_dir=str(dataset_dir),
        out_dir=str(out_dir),
        variant=modelmod.FOP,
        embed_dim=16,
        epochs=2,
        batch_size=16,
        n_valid_trials=40,
        n_verify_trials=60,
        gallery_sizes=(2, 4),
        n_match_trials=30,
    )
    base.update(overrides)
    return runs.make_run_config(base)


class TestRunConfig:
    def test_digest_is_deterministic_and_sensitive(self, small_dataset_dir, tmp_path):
        a = small_cfg(small_dataset_dir, tmp_path)
        b = small_cfg(small_dataset_dir, tmp_path)
        c = small_cfg(small_dataset_dir, tmp_path, seed=1)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()

    def test_unknown_field_rejected(self, small_dataset_dir, tmp_path):
        with pytest.raises(InvalidArgumentError, match="unknown run config fields"):
            runs.make_run_config({"dataset_dir": str(small_dataset_dir),
                                  "out_dir": str(tmp_path), "learning_rate": 0.1})

    @pytest.mark.parametrize(
        "overrides",
        [
            dict(split_mode="open_set"),
            dict(variant="BASELINE"),
            dict(epochs=-1),
            dict(decay_rate=0.0),
            dict(gallery_sizes=(1,)),
        ],
    )
    def test_validation(self, small_dataset_dir, tmp_path, overrides):
        with pytest.raises(InvalidArgumentError):
            small_cfg(small_dataset_dir, tmp_path, **overrides)


class TestGenerate:
    def test_generate_round_trips(self, tmp_path):
        result = runs.run_generate(SMALL_SPEC, tmp_path / "ds")
        loaded = datamod.load_dataset(result.dataset_dir)
        assert len(loaded) == result.n_records == 80
        assert result.n_speakers == 8
        assert result.dataset_digest == datamod.dataset_digest(result.dataset_dir)
        for path in result.outputs:
            assert Path(path).is_file()


class TestTrainRun:
    def test_artifacts_and_history_shape(self, small_dataset_dir, tmp_path):
        cfg = small_cfg(small_dataset_dir, tmp_path / "run")
        result = runs.run_train(cfg)
        assert Path(result.checkpoint_path).is_file()
        lines = Path(result.history_path).read_text().strip().split("\n")
        assert lines[0] == "epoch,train_loss,valid_eer,lr"
        assert len(lines) - 1 == cfg.epochs
        doc = json.loads(Path(result.run_doc_path).read_text())
        assert doc["run_config"] == cfg.to_json_dict()
        assert doc["dataset_digest"] == datamod.dataset_digest(small_dataset_dir)
        assert doc["best_epoch"] == result.best_epoch

    def test_zero_epochs_checkpoint_is_init(self, small_dataset_dir, tmp_path):
        cfg = small_cfg(small_dataset_dir, tmp_path / "run0", epochs=0, seed=5)
        result = runs.run_train(cfg)
        loaded_cfg, loaded = modelmod.load_checkpoint(result.checkpoint_path)
        init = modelmod.init_params(loaded_cfg, 5)
        for got, expected in zip(loaded.tensors(), init.tensors()):
            assert got.values.tobytes() == expected.values.tobytes()
        assert result.best_epoch is None

    def test_rerun_is_byte_identical(self, small_dataset_dir, tmp_path):
        cfg_a = small_cfg(small_dataset_dir, tmp_path / "a")
        cfg_b = small_cfg(small_dataset_dir, tmp_path / "b")
        ra = runs.run_train(cfg_a)
        rb = runs.run_train(cfg_b)
        assert Path(ra.history_path).read_bytes() == Path(rb.history_path).read_bytes()
        assert Path(ra.checkpoint_path).read_bytes() == Path(rb.checkpoint_path).read_bytes()


@pytest.fixture(scope="module")
def trained(tmp_path_factory, small_dataset_dir):
    out = tmp_path_factory.mktemp("trained")
    cfg = small_cfg(small_dataset_dir, out)
    return runs.run_train(cfg)


class TestEvalVerify:
    def test_generated_trials_and_report(self, small_dataset_dir, tmp_path, trained):
        result = runs.run_eval_verify(
            trained.checkpoint_path, str(small_dataset_dir), str(tmp_path / "ev"),
            n_trials=60,
        )
        assert 0.0 <= result.eer <= 1.0 and 0.0 <= result.auc <= 1.0
        assert Path(result.trials_path).is_file()
        report = load_report_json(result.report_json_path)
        assert report.eer == result.eer
        assert report.metadata["trials_digest"] == result.trials_digest
        assert report.metadata["dataset_digest"] == datamod.dataset_digest(small_dataset_dir)
        csv = Path(result.report_csv_path).read_text().strip().split("\n")
        assert len(csv) == 2

    def test_ingests_external_trials(self, small_dataset, small_dataset_dir, tmp_path, trained):
        ids = [r.instance_id for r in small_dataset.records]
        trials = datamod.make_verification_trials(small_dataset, ids, 50, seed=77)
        path = tmp_path / "custom.csv"
        datamod.write_verification_trials(trials, path)
        result = runs.run_eval_verify(
            trained.checkpoint_path, str(small_dataset_dir), str(tmp_path / "ev2"),
            trials_path=str(path),
        )
        assert result.n_trials == 50
        assert result.trials_path == str(path)

    def test_single_class_trials_rejected(self, small_dataset, small_dataset_dir, tmp_path, trained):
        index = small_dataset.by_instance()
        same = [r.instance_id for r in small_dataset.records if r.speaker_id == "spk0000"]
        path = tmp_path / "pos_only.csv"
        lines = ["face_id,voice_id,label"] + [f"{i},{i},1" for i in same]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(InvalidArgumentError):
            runs.run_eval_verify(
                trained.checkpoint_path, str(small_dataset_dir), str(tmp_path / "ev3"),
                trials_path=str(path),
            )

    def test_unknown_trial_ids_rejected(self, small_dataset_dir, tmp_path, trained):
        path = tmp_path / "ghost.csv"
        path.write_text("face_id,voice_id,label\nghost_a,ghost_b,1\nghost_c,ghost_d,0\n")
        with pytest.raises(InvalidArgumentError, match="unknown instance"):
            runs.run_eval_verify(
                trained.checkpoint_path, str(small_dataset_dir), str(tmp_path / "ev4"),
                trials_path=str(path),
            )


class TestEvalMatch:
    def test_curve_sorted_and_trials_written(self, small_dataset_dir, tmp_path, trained):
        result = runs.run_eval_match(
            trained.checkpoint_path, str(small_dataset_dir), str(tmp_path / "em"),
            gallery_sizes=(4, 2), n_trials=30,
        )
        assert sorted(result.accuracy_by_gallery_size) == [2, 4]
        lines = Path(result.curve_csv_path).read_text().strip().split("\n")
        assert lines[0] == "n_c,accuracy"
        assert [int(l.split(",")[0]) for l in lines[1:]] == [2, 4]
        for n_c in (2, 4):
            assert Path(tmp_path / "em" / f"match_trials_nc{n_c}.jsonl").is_file()

    def test_explicit_trials_file(self, small_dataset, small_dataset_dir, tmp_path, trained):
        ids = [r.instance_id for r in small_dataset.records]
        trials = datamod.make_matching_trials(small_dataset, ids, 3, 25, seed=5)
        path = tmp_path / "match.jsonl"
        datamod.write_matching_trials(trials, path)
        result = runs.run_eval_match(
            trained.checkpoint_path, str(small_dataset_dir), str(tmp_path / "em2"),
            trials_path=str(path),
        )
        assert list(result.accuracy_by_gallery_size) == [3]


class TestAblate:
    def test_grid_rows_and_shared_trials(self, small_dataset_dir, tmp_path):
        cfg = small_cfg(small_dataset_dir, tmp_path / "ab")
        result = runs.run_ablate(cfg, ["CE", "FOP"], [0, 1])
        assert len(result.cells) == 4
        lines = Path(result.csv_path).read_text().strip().split("\n")
        assert lines[0].startswith("variant,seed,eer,auc,acc_2,acc_4")
        # 4 per-run rows + mean/std per variant
        assert len(lines) - 1 == 4 + 2 * 2
        doc = json.loads(Path(result.report_json_path).read_text())
        assert doc["verify_trials_digest"] == result.trials_digest
        assert set(doc["match_trials_digests"]) == {"2", "4"}

    def test_single_cell(self, small_dataset_dir, tmp_path):
        cfg = small_cfg(small_dataset_dir, tmp_path / "ab1")
        result = runs.run_ablate(cfg, ["CE"], [3])
        per_run = [c for c in result.cells]
        assert len(per_run) == 1
        assert per_run[0].variant == "CE" and per_run[0].seed == 3

    def test_unknown_variant_rejected(self, small_dataset_dir, tmp_path):
        cfg = small_cfg(small_dataset_dir, tmp_path / "ab2")
        with pytest.raises(InvalidArgumentError):
            runs.run_ablate(cfg, ["OURS", "THEIRS"], [0])

    def test_rerun_is_byte_identical(self, small_dataset_dir, tmp_path):
        ra = runs.run_ablate(small_cfg(small_dataset_dir, tmp_path / "x"), ["CE"], [0, 1])
        rb = runs.run_ablate(small_cfg(small_dataset_dir, tmp_path / "y"), ["CE"], [0, 1])
        assert Path(ra.csv_path).read_bytes() == Path(rb.csv_path).read_bytes()
