import json

from kpgen.corpus import contains_stemmed, load_dataset, tokenize
from kpgen.stemmer import stem_tokens
from kpgen.toydata import (
    TOPICS,
    dump_dataset,
    generate_toy_corpus,
    toy_config_text,
)


def theme_of(doc):
    return doc.keyphrases[0]


class TestCorpusShape:
    def test_split_sizes(self):
        train, valid, test = generate_toy_corpus(seed=1)
        assert (len(train), len(valid), len(test)) == (50, 10, 10)

    def test_five_gold_per_doc(self):
        train, valid, test = generate_toy_corpus(seed=1)
        for doc in train + valid + test:
            assert len(doc.keyphrases) == 5
            assert len(set(doc.keyphrases)) == 5

    def test_ids_unique_and_split_tagged(self):
        train, valid, test = generate_toy_corpus(seed=1)
        ids = [d.id for d in train + valid + test]
        assert len(set(ids)) == len(ids)
        assert all("-train-" in d.id for d in train)
        assert all("-valid-" in d.id for d in valid)
        assert all("-test-" in d.id for d in test)

    def test_deterministic_generation(self):
        a = generate_toy_corpus(seed=5)
        b = generate_toy_corpus(seed=5)
        assert a == b
        c = generate_toy_corpus(seed=6)
        assert a != c


class TestKeyphrasePlacement:
    def test_pool_phrases_present_in_text(self):
        train, valid, test = generate_toy_corpus(seed=1)
        for doc in train + valid + test:
            src = stem_tokens(tokenize(doc.title) + tokenize(doc.abstract))
            for phrase in doc.keyphrases[1:]:
                assert contains_stemmed(src, stem_tokens(tokenize(phrase)))

    def test_theme_present_only_in_train_text(self):
        train, valid, test = generate_toy_corpus(seed=1)
        for doc in train:
            src = stem_tokens(tokenize(doc.title) + tokenize(doc.abstract))
            assert contains_stemmed(src, stem_tokens(tokenize(theme_of(doc))))
        for doc in valid + test:
            src = stem_tokens(tokenize(doc.title) + tokenize(doc.abstract))
            assert not contains_stemmed(src, stem_tokens(tokenize(theme_of(doc))))

    def test_pool_phrases_avoid_theme_tokens(self):
        # keeps the held-out absence guarantee independent of phrase choice
        for topic in TOPICS:
            theme_stems = set(stem_tokens(tokenize(topic["theme"])))
            for phrase in topic["pool"]:
                assert not theme_stems & set(stem_tokens(tokenize(phrase)))
            for filler in topic["fillers"]:
                assert not theme_stems & set(stem_tokens([filler]))


class TestSerialization:
    def test_dump_load_round_trip(self, tmp_path):
        train, _, _ = generate_toy_corpus(seed=1)
        path = tmp_path / "toy.jsonl"
        dump_dataset(train, path)
        back = load_dataset(path)
        assert [d.id for d in back] == [d.id for d in train]
        assert back[0].keyphrases == train[0].keyphrases

    def test_dump_is_sorted_json(self, tmp_path):
        train, _, _ = generate_toy_corpus(seed=1)
        path = tmp_path / "toy.jsonl"
        dump_dataset(train, path)
        first = path.read_text(encoding="utf-8").splitlines()[0]
        assert list(json.loads(first)) == sorted(json.loads(first))

    def test_toy_config_parses(self, tmp_path):
        from kpgen.config import PipelineConfig, parse_config_file

        path = tmp_path / "toy_config.txt"
        path.write_text(toy_config_text(str(tmp_path)), encoding="utf-8")
        cfg = PipelineConfig(**parse_config_file(path))
        assert cfg.mode == "KG-KE-KR-M"
        assert cfg.epochs == 300
        assert cfg.train_path.endswith("toy_train.jsonl")
