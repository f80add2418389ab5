#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "commx/error.hpp"
#include "commx/text.hpp"
#include "test_util.hpp"

using namespace commx;
namespace fs = std::filesystem;

using testutil::kind_of;
using testutil::message_of;
using testutil::TempDir;

TEST_CASE("tokenizer lowercases and splits punctuation") {
  const auto t = tokenize("Great movie, didn't LOVE it!");
  const std::vector<std::string> want = {"great", "movie", ",", "didn", "'",
                                         "t",     "love",  "it", "!"};
  CHECK(t == want);
  CHECK(tokenize("  \t ").empty());
  CHECK(tokenize("café au lait") ==
        std::vector<std::string>{"café", "au", "lait"});
  CHECK(tokenize("Same text twice.") == tokenize("Same text twice."));
}

TEST_CASE("single tsv line gives one example with two content tokens") {
  TempDir dir;
  const auto p = dir.write("train.tsv", "pos\tgood movie\n");
  const Corpus c = load_corpus(p, {});
  REQUIRE(c.train.size() == 1);
  CHECK(c.train[0].tokens.size() == 2);
  CHECK(c.vocab.size() == 4);
  CHECK(c.labels.names == std::vector<std::string>{"pos"});
  CHECK(c.task == Task::TextClassification);
}

TEST_CASE("empty file gives empty corpus with only specials") {
  TempDir dir;
  const auto p = dir.write("train.tsv", "");
  const Corpus c = load_corpus(p, {});
  CHECK(c.train.empty());
  CHECK(c.vocab.size() == 2);
  CHECK(c.vocab.token(Vocabulary::kPad) == "<pad>");
  CHECK(c.vocab.token(Vocabulary::kUnk) == "<unk>");
}

TEST_CASE("malformed line reports its line number") {
  TempDir dir;
  const auto p = dir.write("train.tsv", "pos\tfine\nno tab here\n");
  const auto f = [&] { load_corpus(p, {}); };
  CHECK(kind_of(f) == ErrorKind::Format);
  CHECK(message_of(f).find("train.tsv:2") != std::string::npos);
}

TEST_CASE("vocabulary comes from train only and unknown labels are rejected") {
  TempDir dir;
  const auto train = dir.write("train.tsv", "pos\tgood film\nneg\tbad film\n");
  const auto test = dir.write("test.tsv", "pos\tgood unseen\n");
  const Corpus c = load_corpus(train, std::nullopt, test, {});
  REQUIRE(c.test.size() == 1);
  CHECK(c.test[0].tokens[1] == Vocabulary::kUnk);
  CHECK(c.labels.names == std::vector<std::string>{"neg", "pos"});

  const auto bad = dir.write("dev.tsv", "neutral\tmeh\n");
  CHECK(kind_of([&] { load_corpus(train, bad, std::nullopt, {}); }) ==
        ErrorKind::Label);

  CorpusOptions keep;
  keep.keep_labels = std::vector<std::string>{"pos", "neg"};
  const auto four = dir.write("four.tsv", "pos\ta\nneg\tb\nmix\tc\n");
  const Corpus k = load_corpus(four, keep);
  CHECK(k.train.size() == 2);
  CHECK(k.train[0].label == 0);
  CHECK(k.train[1].label == 1);
}

TEST_CASE("snli and e-snli records") {
  TempDir dir;
  const auto p = dir.write(
      "snli.jsonl",
      R"({"gold_label":"entailment","sentence1":"A man sleeps.","sentence2":"Someone rests.","pairID":"p1"})"
      "\n"
      R"({"gold_label":"-","sentence1":"x","sentence2":"y"})"
      "\n"
      R"({"gold_label":"contradiction","sentence1":"A dog runs.","sentence2":"A cat sits.","premise_highlights":[1,2]})"
      "\n");
  CorpusOptions snli;
  snli.format = CorpusFormat::SnliJsonl;
  const Corpus c = load_corpus(p, snli);
  CHECK(c.task == Task::Nli);
  REQUIRE(c.train.size() == 2);
  CHECK(c.train[0].id == "p1");
  CHECK(c.train[0].label == 0);
  CHECK(c.train[1].label == 2);
  CHECK(c.train[0].hypothesis.size() == 3);
  CHECK_FALSE(c.train[1].highlights.has_value());

  CorpusOptions esnli;
  esnli.format = CorpusFormat::EsnliJsonl;
  const Corpus e = load_corpus(p, esnli);
  REQUIRE(e.train[1].highlights.has_value());
  CHECK(*e.train[1].highlights == std::vector<std::size_t>{1, 2});

  const auto out_of_range = dir.write(
      "bad.jsonl",
      R"({"gold_label":"neutral","sentence1":"A dog.","sentence2":"b","premise_highlights":[7]})"
      "\n");
  CHECK(kind_of([&] { load_corpus(out_of_range, esnli); }) == ErrorKind::Data);
  const auto bad_label = dir.write(
      "lab.jsonl", R"({"gold_label":"maybe","sentence1":"a","sentence2":"b"})"
                   "\n");
  CHECK(kind_of([&] { load_corpus(bad_label, snli); }) == ErrorKind::Label);
  const auto broken = dir.write("broken.jsonl", "{not json\n");
  CHECK(kind_of([&] { load_corpus(broken, snli); }) == ErrorKind::Format);
}

TEST_CASE("embeddings: partial coverage, full coverage, none, bad dimension") {
  TempDir dir;
  const auto train5 = dir.write("train5.tsv", "pos\talpha beta gamma\n");
  const Corpus c = load_corpus(train5, {});
  REQUIRE(c.vocab.size() == 5);

  const auto three = dir.write("three.vec",
                               "alpha 1 2 3 4\n"
                               "zeta 0 0 0 0\n"
                               "omega 1 1 1 1\n");
  const auto t = load_embeddings(three, c.vocab, 7);
  CHECK(t.dimension == 4);
  CHECK(t.random_rows == 2);
  CHECK(t.frozen);
  CHECK(t.vectors.shape == Shape{5, 4});
  const auto alpha = c.vocab.id("alpha");
  CHECK(t.vectors.data[alpha * 4 + 2] == 3.0);
  for (std::size_t j = 0; j < 4; ++j) CHECK(t.vectors.data[j] == 0.0);
  for (double v : t.vectors.data) CHECK(std::abs(v) <= 4.0);
  const auto beta = c.vocab.id("beta");
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(std::abs(t.vectors.data[beta * 4 + j]) <= 0.1);
  }

  const auto all = dir.write("all.vec", "alpha 1 0\nbeta 0 1\ngamma 1 1\n");
  const auto ta = load_embeddings(all, c.vocab, 7);
  CHECK(ta.random_rows == 0);
  CHECK(ta.warnings.empty());

  const auto none = dir.write("none.vec", "zzz 1 0\n");
  const auto tn = load_embeddings(none, c.vocab, 7);
  CHECK(tn.random_rows == 3);
  CHECK(tn.warnings.size() == 1);

  const auto ragged = dir.write("ragged.vec", "alpha 1 2 3 4\nbeta 1 2 3\n");
  const auto f = [&] { load_embeddings(ragged, c.vocab, 7); };
  CHECK(kind_of(f) == ErrorKind::Format);
  CHECK(message_of(f).find(":2") != std::string::npos);

  const auto cased = dir.write("cased.vec", "Alpha 9 9\nbeta 1 1\n");
  const auto tc = load_embeddings(cased, c.vocab, 7);
  CHECK(tc.vectors.data[alpha * 2] == 9.0);
}

TEST_CASE("stopword flags") {
  TempDir dir;
  const auto p = dir.write("train.tsv", "pos\tthe film was excellent and moving\n");
  const Corpus c = load_corpus(p, {});
  const auto mask = stopword_mask(c.vocab);
  REQUIRE(mask.size() == c.vocab.size());
  CHECK(mask[c.vocab.id("the")]);
  CHECK(mask[c.vocab.id("was")]);
  CHECK_FALSE(mask[c.vocab.id("excellent")]);
  CHECK_FALSE(mask[Vocabulary::kPad]);
  CHECK(c.vocab.stopword_flags() == mask);
  CHECK(english_stopwords().size() == 127);
}

TEST_CASE("flagged count equals set intersection with the bundled list") {
  std::set<std::string> list;
  std::ifstream in(fs::path(COMMX_SOURCE_DIR) / "data" / "stopwords_en.txt");
  std::string w;
  while (in >> w) list.insert(w);
  REQUIRE(list.size() == 127);
  std::set<std::string> embedded;
  for (auto s : english_stopwords()) embedded.emplace(s);
  CHECK(embedded == list);

  SyntheticConfig cfg;
  cfg.n_train = 300;
  const Corpus c = generate_synthetic(cfg);
  Vocabulary v = c.vocab;
  for (const std::string extra : {"not", "very", "good", "you", "xyz"}) v.add(extra);
  std::set<std::string> vocab_tokens;
  for (std::size_t i = 0; i < v.size(); ++i) vocab_tokens.insert(v.token(i));
  std::vector<std::string> inter;
  std::set_intersection(list.begin(), list.end(), vocab_tokens.begin(),
                        vocab_tokens.end(), std::back_inserter(inter));
  const auto mask = stopword_mask(v);
  CHECK(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)) ==
        inter.size());
  CHECK(inter.size() >= 3);
}

TEST_CASE("vocabulary round trip keeps ids and fingerprint") {
  TempDir dir;
  const Corpus c = generate_synthetic({});
  const auto path = dir.path / "vocab.json";
  c.vocab.save(path);
  const Vocabulary back = Vocabulary::load(path);
  REQUIRE(back.size() == c.vocab.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back.token(i) == c.vocab.token(i));
    CHECK(back.id(c.vocab.token(i)) == i);
    CHECK(back.is_stopword(i) == c.vocab.is_stopword(i));
  }
  CHECK(back.fingerprint() == c.vocab.fingerprint());

  Vocabulary other = c.vocab;
  other.add("brand-new");
  CHECK(other.fingerprint() != c.vocab.fingerprint());

  auto j = c.vocab.to_json();
  j["fingerprint"] = "0000";
  CHECK_THROWS_AS(Vocabulary::from_json(j), Error);
}

TEST_CASE("synthetic generation") {
  SyntheticConfig cfg;
  cfg.n_train = 201;
  cfg.n_dev = 50;
  cfg.n_test = 77;
  cfg.n_classes = 3;
  const Corpus a = generate_synthetic(cfg);
  const Corpus b = generate_synthetic(cfg);
  TempDir dir;
  write_tsv(dir.path / "a.tsv", a, a.train);
  write_tsv(dir.path / "b.tsv", b, b.train);
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(dir.path / "a.tsv") == slurp(dir.path / "b.tsv"));
  CHECK(a.vocab.fingerprint() == b.vocab.fingerprint());

  cfg.seed = 14;
  const Corpus other = generate_synthetic(cfg);
  write_tsv(dir.path / "c.tsv", other, other.train);
  CHECK(slurp(dir.path / "a.tsv") != slurp(dir.path / "c.tsv"));

  for (const auto* split : {&a.train, &a.dev, &a.test}) {
    std::vector<std::size_t> counts(3, 0);
    for (const auto& ex : *split) {
      ++counts[ex.label];
      std::size_t planted = 0;
      for (auto id : ex.tokens) {
        const auto& tok = a.vocab.token(id);
        if (tok.rfind("kw", 0) == 0) {
          CHECK(tok.rfind("kw" + std::to_string(ex.label) + "x", 0) == 0);
          ++planted;
        }
      }
      CHECK(planted >= 1);
      CHECK(planted <= 3);
      CHECK(ex.tokens.size() == cfg.noise_len + planted);
    }
    const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*mx - *mn <= 1);
  }

  // Written files load back to the same corpus.
  const Corpus reread = load_corpus(dir.path / "a.tsv", {});
  CHECK(reread.train.size() == a.train.size());

  SyntheticConfig empty;
  empty.n_train = 0;
  CHECK(generate_synthetic(empty).train.empty());

  SyntheticConfig bad;
  bad.vocab_size = 20;
  CHECK(kind_of([&] { generate_synthetic(bad); }) == ErrorKind::Config);
}

TEST_CASE("bag-of-words linear probe separates synthetic train split") {
  // Multiclass perceptron on binary bag features; converges because the
  // planted keywords make the classes linearly separable.
  const Corpus c = generate_synthetic({});
  const std::size_t V = c.vocab.size(), C = c.labels.size();
  std::vector<double> w(V * C, 0.0);
  auto predict = [&](const Example& ex) {
    std::set<TokenId> bag(ex.tokens.begin(), ex.tokens.end());
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t k = 0; k < C; ++k) {
      double s = 0.0;
      for (auto t : bag) s += w[k * V + t];
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    return std::pair{best, bag};
  };
  std::size_t errors = 1;
  for (int epoch = 0; epoch < 50 && errors > 0; ++epoch) {
    errors = 0;
    for (const auto& ex : c.train) {
      auto [pred, bag] = predict(ex);
      if (pred == ex.label) continue;
      ++errors;
      for (auto t : bag) {
        w[ex.label * V + t] += 1.0;
        w[pred * V + t] -= 1.0;
      }
    }
  }
  std::size_t correct = 0;
  for (const auto& ex : c.train) correct += predict(ex).first == ex.label;
  CHECK(correct == c.train.size());
}
