import io
import json
import os

import numpy as np
import pytest

from imagepoet.cli import main
from imagepoet.datapipe import (keyword_recall, load_concept_lexicon,
                                load_feature_file, image_keywords,
                                load_corpus)
from imagepoet.checkpoint import load_checkpoint
from imagepoet.model import generate_poem

from corpus_helpers import write_keyword_file, write_toy_corpus


TRAIN_FLAGS = ["--vocab", "16", "--hidden", "4", "--lines", "2",
               "--chars", "3", "--batch", "4", "--epochs", "3",
               "--valid-frac", "0.2"]


def run_cli(*argv):
    out = io.StringIO()
    code = main(list(argv), stdout=out)
    return code, out.getvalue()


@pytest.fixture
def corpus(tmp_path):
    return write_toy_corpus(tmp_path, seed=5)


def train_once(corpus, tmp_path, name="model.ckpt", seed="3", extra=()):
    ckpt = str(tmp_path / name)
    code, out = run_cli("train", "--corpus", corpus["corpus"],
                        "--lexicon", corpus["lexicon"], "--out", ckpt,
                        "--seed", seed, *TRAIN_FLAGS, *extra)
    assert code == 0, out
    return ckpt


class TestTrain:
    def test_writes_checkpoint_and_log(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        assert os.path.exists(ckpt)
        log_lines = [l for l in open(ckpt + ".log", encoding="utf-8")
                     if l.strip()]
        assert len(log_lines) == 3  # one validation entry per epoch
        for line in log_lines:
            parts = line.split()
            assert parts[0] == "epoch" and parts[2] == "train" \
                and parts[4] == "valid"

    def test_same_seed_byte_identical_checkpoints(self, corpus, tmp_path):
        a = train_once(corpus, tmp_path, name="a.ckpt", seed="11")
        b = train_once(corpus, tmp_path, name="b.ckpt", seed="11")
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_lambda_zero_trains_the_unbiased_path(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path, name="nolambda.ckpt",
                          extra=("--lambda", "0.0"))
        assert load_checkpoint(ckpt).config.topic_weight == 0.0

    def test_thread_env_cap_is_accepted(self, corpus, tmp_path, monkeypatch):
        monkeypatch.setenv("IMAGEPOET_THREADS", "1")
        ckpt = train_once(corpus, tmp_path, name="capped.ckpt",
                          extra=("--threads", "4"))
        assert os.path.exists(ckpt)

    def test_missing_corpus_is_a_data_error(self, corpus, tmp_path):
        code, _ = run_cli("train", "--corpus", str(tmp_path / "nope.jsonl"),
                          "--lexicon", corpus["lexicon"],
                          "--out", str(tmp_path / "x.ckpt"), *TRAIN_FLAGS)
        assert code == 2


class TestGenerate:
    def test_emits_one_row_per_line(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        keywords = write_keyword_file(tmp_path, [(2,), (3, 4)])
        code, out = run_cli("generate", "--checkpoint", ckpt,
                            "--features", corpus["features"],
                            "--keywords", keywords)
        assert code == 0
        rows = out.strip().splitlines()
        assert len(rows) == 2
        assert all(len(row.split()) == 4 for row in rows)  # "line:" + 3 ids

    def test_machine_mode_is_bare_ids(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        keywords = write_keyword_file(tmp_path, [(2,)])
        code, out = run_cli("generate", "--checkpoint", ckpt,
                            "--features", corpus["features"],
                            "--keywords", keywords, "--machine")
        assert code == 0
        poem = [[int(c) for c in row.split()] for row in out.strip().splitlines()]
        assert len(poem) == 2 and all(len(line) == 3 for line in poem)
        model = load_checkpoint(ckpt)
        features = load_feature_file(corpus["features"])
        assert poem == generate_poem(model, features, [(2,)])

    def test_lambda_override_changes_the_mixture(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        keywords = write_keyword_file(tmp_path, [(2,), (3,)])
        _, biased = run_cli("generate", "--checkpoint", ckpt,
                            "--features", corpus["features"],
                            "--keywords", keywords, "--machine")
        code, unbiased = run_cli("generate", "--checkpoint", ckpt,
                                 "--features", corpus["features"],
                                 "--keywords", keywords, "--machine",
                                 "--lambda", "0.0")
        assert code == 0
        model = load_checkpoint(ckpt)
        model.config.topic_weight = 0.0
        features = load_feature_file(corpus["features"])
        expected = generate_poem(model, features, [(2,), (3,)])
        got = [[int(c) for c in row.split()]
               for row in unbiased.strip().splitlines()]
        assert got == expected

    def test_validate_appends_a_form_report(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        keywords = write_keyword_file(tmp_path, [(2,)])
        lex = tmp_path / "tones.tsv"
        lex.write_text("".join("%d\tE\t1\n" % c for c in range(16)),
                       encoding="utf-8")
        pattern = tmp_path / "pattern.txt"
        pattern.write_text("***\n***\n", encoding="utf-8")
        code, out = run_cli("generate", "--checkpoint", ckpt,
                            "--features", corpus["features"],
                            "--keywords", keywords, "--validate",
                            "--lexicon", str(lex), "--pattern", str(pattern))
        assert code == 0
        assert "structure ok" in out and "tones ok" in out and "rhyme ok" in out

    def test_validate_without_lexicon_is_usage_error(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        keywords = write_keyword_file(tmp_path, [(2,)])
        code, _ = run_cli("generate", "--checkpoint", ckpt,
                          "--features", corpus["features"],
                          "--keywords", keywords, "--validate")
        assert code == 1

    def test_missing_feature_file_names_the_path(self, corpus, tmp_path,
                                                 capsys):
        ckpt = train_once(corpus, tmp_path)
        keywords = write_keyword_file(tmp_path, [(2,)])
        missing = str(tmp_path / "absent.vfgr")
        code, _ = run_cli("generate", "--checkpoint", ckpt,
                          "--features", missing, "--keywords", keywords)
        assert code == 2
        assert "absent.vfgr" in capsys.readouterr().err

    def test_feature_shape_mismatch_is_an_input_error(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        keywords = write_keyword_file(tmp_path, [(2,)])
        from imagepoet.datapipe import write_feature_file
        bad = str(tmp_path / "bad.vfgr")
        write_feature_file(bad, np.zeros((5, 5)))
        code, _ = run_cli("generate", "--checkpoint", ckpt,
                          "--features", bad, "--keywords", keywords)
        assert code == 2


class TestEval:
    def test_mean_recall_matches_hand_scoring(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        code, out = run_cli("eval", "--checkpoint", ckpt,
                            "--corpus", corpus["corpus"],
                            "--lexicon", corpus["lexicon"])
        assert code == 0
        lines = out.strip().splitlines()
        per_sample = [l for l in lines if l.startswith("recall ")]
        summary = [l for l in lines if l.startswith("mean_recall ")]
        assert len(per_sample) == 2 and len(summary) == 1
        values = [float(l.split()[2]) for l in per_sample]
        assert all(0.0 <= v <= 1.0 for v in values)

        model = load_checkpoint(ckpt)
        lexicon = load_concept_lexicon(corpus["lexicon"])
        images, _ = load_corpus(corpus["corpus"])
        expected = []
        for image in images:
            poem = generate_poem(model, load_feature_file(image.feature_path),
                                 image_keywords(image, lexicon))
            expected.append(keyword_recall(poem, image.concepts, lexicon))
        assert values == pytest.approx(expected, abs=1e-6)
        mean = float(summary[0].split()[1])
        assert mean == pytest.approx(sum(expected) / len(expected), abs=1e-6)

    def test_empty_pool_is_an_error(self, corpus, tmp_path):
        ckpt = train_once(corpus, tmp_path)
        empty = tmp_path / "empty.jsonl"
        empty.write_text(json.dumps({"poem_id": "p",
                                     "lines": [[2, 3, 4], [5, 6, 7]]}) + "\n",
                         encoding="utf-8")
        code, _ = run_cli("eval", "--checkpoint", ckpt,
                          "--corpus", str(empty),
                          "--lexicon", corpus["lexicon"])
        assert code == 2


class TestCheck:
    def test_passes_on_a_fresh_model(self):
        code, out = run_cli("check", "--steps", "60")
        assert code == 0
        assert "max relative error" in out
        assert "all checks passed" in out

    def test_corrupted_gradient_hook_fails(self):
        code, out = run_cli("check", "--steps", "20", "--inject-grad-error")
        assert code == 3
        assert "FAIL" in out


class TestUsage:
    def test_unknown_flag(self):
        code, _ = run_cli("check", "--no-such-flag")
        assert code == 1

    def test_missing_required_flag(self):
        code, _ = run_cli("train", "--corpus", "x")
        assert code == 1

    def test_unknown_subcommand(self):
        code, _ = run_cli("frobnicate")
        assert code == 1
