import json
from dataclasses import fields

import numpy as np
import pytest
from sklearn.base import clone

from mentiondetect import MentionDetector, OperatingMode, RunConfig, generate_synthetic
from mentiondetect.checkpoint import load_checkpoint, read_manifest
from mentiondetect.exceptions import ContractError, FormatError

TINY = dict(word_dim=8, lstm_layers=1, lstm_size=6, ffnn_size=8, biaffine_dim=6,
            width_dim=4, max_width=6, train_steps=6, eval_interval=3)


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic(12, seed=5, nesting=True)


@pytest.fixture(scope="module")
def fitted(corpus):
    return MentionDetector(head="lee", **TINY).fit(corpus[:8])


class TestParams:
    def test_defaults_match_run_config(self):
        params = MentionDetector().get_params()
        config = RunConfig().estimator_params()
        assert params == config

    def test_published_defaults(self):
        p = MentionDetector().get_params()
        assert (p["lstm_layers"], p["lstm_size"], p["lstm_dropout"]) == (3, 200, 0.4)
        assert (p["ffnn_layers"], p["ffnn_size"], p["ffnn_dropout"]) == (2, 150, 0.2)
        assert p["embedding_dropout"] == 0.5 and p["learning_rate"] == 1e-3
        assert p["train_steps"] == 40000 and p["max_width"] == 30
        assert (p["lam"], p["beta"]) == (0.4, 0.5)

    def test_clone_and_set_params(self):
        est = MentionDetector(head="concat", seed=3)
        twin = clone(est)
        assert twin.get_params() == est.get_params() and twin is not est
        twin.set_params(beta=0.7)
        assert twin.beta == 0.7 and est.beta == 0.5

    def test_config_file_overrides(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"head": "lee", "seed": 4}))
        cfg = RunConfig.from_file(path, seed=9, beta=None)
        assert (cfg.head, cfg.seed, cfg.beta) == ("lee", 9, 0.5)
        path.write_text(json.dumps({"colour": 1}))
        with pytest.raises(ContractError):
            RunConfig.from_file(path)

    def test_config_field_names_are_estimator_params(self):
        names = {f.name for f in fields(RunConfig)} - set(RunConfig._PATH_FIELDS)
        assert names == set(MentionDetector().get_params())


class TestFitPredict:
    def test_unfitted_raises(self, corpus):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            MentionDetector().predict(corpus[:1])

    def test_log_schedule(self, fitted):
        assert [r["step"] for r in fitted.log_] == [3, 6]
        assert all(np.isfinite(r["loss"]) for r in fitted.log_)

    def test_high_recall_count(self, fitted, corpus):
        mode = OperatingMode.high_recall(0.2)
        for doc, spans in zip(corpus, fitted.predict(corpus, mode)):
            assert len(spans) == int(np.floor(0.2 * doc.n_tokens + 1e-9))

    def test_predict_documents_replaces_mentions(self, fitted, corpus):
        out = fitted.predict_documents(corpus[:3], OperatingMode.high_recall(0.3))
        for doc, new in zip(corpus, out):
            assert new.sentences == doc.sentences
            assert len(new.probabilities) == len(new.mentions)
            assert all(0 <= p <= 1 for p in new.probabilities)

    def test_score_is_f1(self, fitted, corpus):
        assert fitted.score(corpus[8:]) == fitted.evaluate(corpus[8:]).f1

    def test_accepts_records_and_paths(self, fitted, corpus, tmp_path):
        from mentiondetect import write_corpus
        write_corpus(corpus[:2], tmp_path / "c.jsonl")
        a = fitted.predict(tmp_path / "c.jsonl")
        b = fitted.predict([d.to_record() for d in corpus[:2]])
        assert a == b == fitted.predict(corpus[:2])

    def test_width_budget_contract(self, corpus):
        with pytest.raises(ContractError):
            MentionDetector(head="lee", mode="high-recall", lam=6, **TINY).fit(corpus[:2])

    def test_ner_fit_predicts_labelled_triples(self, corpus):
        est = MentionDetector(head="biaffine", task="ner", **TINY).fit(corpus[:6])
        assert est.model_.labels == ["CELL", "DNA", "PROT"]
        for spans in est.predict(corpus[6:], OperatingMode.high_recall(0.3)):
            assert all(len(s) == 3 and s[2] in est.model_.labels for s in spans)
        assert est.evaluate(corpus[6:]).per_category

    def test_dev_selection_keeps_best(self, corpus):
        est = MentionDetector(head="concat", **TINY).fit(corpus[:6], X_dev=corpus[6:])
        best = max(r["dev"]["f1"] for r in est.log_)
        assert est.evaluate(corpus[6:]).f1 == best


class TestCheckpoint:
    def test_round_trip_rescoring_bit_identical(self, fitted, corpus, tmp_path):
        fitted.save(tmp_path / "ck")
        back = MentionDetector.load(tmp_path / "ck")
        for (s1, p1), (s2, p2) in zip(fitted.predict_proba(corpus), back.predict_proba(corpus)):
            np.testing.assert_array_equal(s1, s2)
            assert p1.tobytes() == p2.tobytes()
        for (n1, t1), (n2, t2) in zip(fitted.model_.named_parameters(),
                                      back.model_.named_parameters()):
            assert n1 == n2 and t1.data.tobytes() == t2.data.tobytes()
        assert back.get_params() == fitted.get_params()

    def test_float64_round_trip(self, corpus, tmp_path):
        est = MentionDetector(head="biaffine", precision="float64", **TINY).fit(corpus[:3])
        est.save(tmp_path / "ck")
        back = MentionDetector.load(tmp_path / "ck")
        assert back.predict_proba(corpus[:2])[0][1].tobytes() == \
            est.predict_proba(corpus[:2])[0][1].tobytes()

    def test_layout(self, fitted, tmp_path):
        fitted.save(tmp_path / "ck")
        manifest = read_manifest(tmp_path / "ck")
        assert manifest["format_version"] == 1 and manifest["precision"] == "float32"
        entry = manifest["tensors"][0]
        raw = (tmp_path / "ck" / entry["file"]).read_bytes()
        assert len(raw) == 4 * int(np.prod(entry["shape"]))

    def test_wrong_shape_refused(self, fitted, tmp_path):
        fitted.save(tmp_path / "ck")
        path = tmp_path / "ck" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["tensors"][0]["shape"][0] += 1
        path.write_text(json.dumps(manifest))
        with pytest.raises(FormatError, match="shape"):
            load_checkpoint(tmp_path / "ck")

    def test_truncated_blob_refused(self, fitted, tmp_path):
        fitted.save(tmp_path / "ck")
        entry = read_manifest(tmp_path / "ck")["tensors"][0]
        blob = tmp_path / "ck" / entry["file"]
        blob.write_bytes(blob.read_bytes()[:-4])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "ck")

    def test_other_head_refused(self, fitted, tmp_path):
        fitted.save(tmp_path / "ck")
        with pytest.raises(FormatError, match="architecture mismatch"):
            MentionDetector.load(tmp_path / "ck", expected_head="biaffine")

    def test_unknown_version_refused(self, fitted, tmp_path):
        fitted.save(tmp_path / "ck")
        path = tmp_path / "ck" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["format_version"] = 99
        path.write_text(json.dumps(manifest))
        with pytest.raises(FormatError, match="version"):
            load_checkpoint(tmp_path / "ck")
