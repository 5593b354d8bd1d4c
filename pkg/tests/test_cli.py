import pytest

from latentchat.cli import main

TINY = [
    "--n_personas=4", "--n_dialogues=12", "--epochs=1", "--d_model=32",
    "--d_ff=64", "--d_latent=8", "--heads=2", "--layers=2",
    "--vocab_size=200", "--max_len=64", "--batch=8", "--seed=7",
]


def tiny_args(workdir, extra=()):
    return list(TINY) + [
        f"--corpus_dir={workdir}/corpus",
        f"--checkpoint={workdir}/model.ckpt",
        f"--vocab_path={workdir}/vocab.txt",
        f"--log_path={workdir}/train.log",
        f"--report_path={workdir}/report",
    ] + list(extra)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["corpus"] + tiny_args(d)) == 0
    assert main(["train"] + tiny_args(d)) == 0
    return d


class TestCorpusCommand:
    def test_files_written(self, workdir):
        for name in ("train.txt", "test.txt", "manifest.json"):
            assert (workdir / "corpus" / name).exists()

    def test_train_file_is_personachat(self, workdir):
        first = (workdir / "corpus" / "train.txt").read_text().splitlines()[0]
        assert first.startswith("1 your persona:")


class TestTrainCommand:
    def test_artifacts_written(self, workdir):
        assert (workdir / "model.ckpt").exists()
        assert (workdir / "vocab.txt").exists()
        log = (workdir / "train.log").read_text().splitlines()
        assert len(log) == 1  # one epoch, one tab-separated row
        assert len(log[0].split("\t")) == 9

    def test_same_seed_byte_identical_checkpoints(self, workdir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir(), b.mkdir()
        assert main(["train"] + tiny_args(a)) == 0
        assert main(["train"] + tiny_args(b)) == 0
        assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()


class TestEvalCommand:
    def test_report_written(self, workdir, capsys):
        assert main(["eval"] + tiny_args(workdir, ["--n_candidates=2"])) == 0
        out = capsys.readouterr().out
        assert "distinct_1" in out or "distinct-1" in out.lower()
        assert (workdir / "report.txt").exists()
        tsv = (workdir / "report.tsv").read_text().splitlines()
        assert len(tsv) >= 2  # header + at least one row


class TestGenerateCommand:
    def test_candidate_table(self, workdir):
        assert main(["generate"] + tiny_args(workdir, ["--n_candidates=3"])) == 0
        lines = (workdir / "report.responses.tsv").read_text().splitlines()
        header = lines[0].split("\t")
        assert header[:3] == ["context_id", "candidate", "selected"]
        body = [l.split("\t") for l in lines[1:]]
        by_ctx = {}
        for row in body:
            by_ctx.setdefault(row[0], []).append(row)
        for rows in by_ctx.values():
            assert len(rows) == 3
            assert sum(r[2] == "1" for r in rows) == 1


class TestErrorHandling:
    def test_unknown_key_is_usage_error(self, workdir):
        with pytest.raises(SystemExit) as e:
            main(["corpus", "--no_such_key=1"])
        assert e.value.code == 2

    def test_missing_checkpoint_exit_code(self, tmp_path):
        rc = main(["eval"] + tiny_args(tmp_path))
        assert rc == 2

    def test_bad_command_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_config_file_and_override(self, workdir, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("# comment line\nseed = 7\nn_dialogues = 12\n")
        with pytest.raises(SystemExit):
            main(["corpus", f"--config={cfg_file}", "--badkey=3"])
