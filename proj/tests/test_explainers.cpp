#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <set>

#include "commx/checkpoint.hpp"
#include "commx/explainers.hpp"
#include "test_util.hpp"

using namespace commx;
using testutil::kind_of;

namespace {

ClassifierConfig tiny_config(Transform t, std::size_t vocab = 12) {
  ClassifierConfig c;
  c.vocab_size = vocab;
  c.n_classes = 2;
  c.embedding_dim = 5;
  c.hidden_size = 4;
  c.transform = t;
  c.seed = 5;
  return c;
}

Example make_example(std::vector<TokenId> ids, std::string id = "x") {
  Example ex;
  ex.id = std::move(id);
  ex.tokens = std::move(ids);
  return ex;
}

double jaccard(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  const std::set<TokenId> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (auto t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

void check_message(const Message& m, const Example& x, std::optional<std::size_t> k) {
  CHECK(std::is_sorted(m.tokens.begin(), m.tokens.end()));
  CHECK(std::adjacent_find(m.tokens.begin(), m.tokens.end()) == m.tokens.end());
  CHECK(std::is_sorted(m.positions.begin(), m.positions.end()));
  std::set<TokenId> from_positions;
  for (auto p : m.positions) {
    REQUIRE(p < x.tokens.size());
    CHECK(x.tokens[p] != Vocabulary::kPad);
    from_positions.insert(x.tokens[p]);
  }
  CHECK(std::vector<TokenId>(from_positions.begin(), from_positions.end()) == m.tokens);
  if (k) CHECK(m.positions.size() <= *k);
}

struct Trained {
  Corpus corpus;
  std::unique_ptr<AttentionClassifier> softmax_model;
  std::unique_ptr<AttentionClassifier> sparsemax_model;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    SyntheticConfig sc;
    sc.n_train = 1000;
    sc.n_dev = 200;
    sc.n_test = 200;
    out.corpus = generate_synthetic(sc);
    TrainConfig tc;
    tc.epochs = 3;
    tc.patience = 2;
    tc.batch_size = 16;
    tc.weight_decay = 1e-5;
    for (auto [slot, head] :
         {std::pair{&out.softmax_model, Transform::softmax()},
          std::pair{&out.sparsemax_model, Transform::sparsemax()}}) {
      ClassifierConfig cfg;
      cfg.vocab_size = out.corpus.vocab.size();
      cfg.embedding_dim = 32;
      cfg.hidden_size = 32;
      cfg.transform = head;
      *slot = std::make_unique<AttentionClassifier>(cfg);
      train_classifier(**slot, out.corpus, tc);
    }
    return out;
  }();
  return t;
}

}  // namespace

TEST_CASE("message keeps a sorted token set and the source positions") {
  const Example x = make_example({4, 7, 4, 9});
  const Message m = Message::from_positions(x, {2, 0, 3}, 3);
  CHECK(m.tokens == std::vector<TokenId>{4, 9});
  CHECK(m.positions == std::vector<std::size_t>{0, 2, 3});
  CHECK(m.size() == 2);
  CHECK(kind_of([&] { Message::from_positions(x, {4}, 1); }) == ErrorKind::Contract);
}

TEST_CASE("explainer config requires or forbids k by kind") {
  ExplainerConfig c;
  c.kind = ExplainerKind::TopkAttention;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::Config);
  c.k = 3;
  c.validate();
  c.kind = ExplainerKind::Selective;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::Config);
  c.k.reset();
  c.validate();
  c.kind = ExplainerKind::Erasure;
  c.k = 0;
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::Config);
  for (auto kind : {ExplainerKind::Random, ExplainerKind::Erasure, ExplainerKind::TopkGradient,
                    ExplainerKind::TopkAttention, ExplainerKind::Selective,
                    ExplainerKind::Joint, ExplainerKind::HumanHighlights}) {
    CHECK(parse_explainer_kind(to_string(kind)) == kind);
  }
  CHECK(kind_of([] { parse_explainer_kind("lime"); }) == ErrorKind::Config);
}

TEST_CASE("top-k positions break ties toward the earlier position") {
  const std::vector<double> s{0.1, 0.3, 0.3, 0.05, 0.3};
  CHECK(top_k_positions(s, {}, 2) == std::vector<std::size_t>{1, 2});
  CHECK(top_k_positions(s, {true, false, true, true, true}, 2) ==
        std::vector<std::size_t>{2, 4});
  CHECK(top_k_positions(s, {}, 9).size() == 5);
  CHECK(top_k_positions(s, {}, 0).empty());
}

TEST_CASE("random explainer: empty, clamped and deterministic") {
  const Example x = make_example({3, 5, 5, 8, Vocabulary::kPad, 9});
  CHECK(explain_random(x, 0, 1).tokens.empty());
  const Message all = explain_random(x, 10, 1);
  CHECK(all.tokens == std::vector<TokenId>{3, 5, 8, 9});
  CHECK(all.positions == std::vector<std::size_t>{0, 1, 2, 3, 5});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(explain_random(x, 2, seed).positions == explain_random(x, 2, seed).positions);
    CHECK(explain_random(x, 2, seed).positions.size() == 2);
  }
}

TEST_CASE("random explainer samples positions uniformly") {
  const Example x = make_example({2, 3, 4, 5, 6});
  std::map<std::size_t, int> counts;
  const int draws = 5000;
  for (int s = 0; s < draws; ++s) {
    for (auto p : explain_random(x, 2, static_cast<std::uint64_t>(s)).positions) ++counts[p];
  }
  // Each position is picked with probability 2/5.
  for (std::size_t p = 0; p < 5; ++p) {
    CHECK(std::abs(counts[p] / static_cast<double>(draws) - 0.4) < 0.03);
  }
}

TEST_CASE("erasure: call count and first pick") {
  const AttentionClassifier c(tiny_config(Transform::softmax()));
  const Example x = make_example({2, 3, 4, 5, 6});
  for (std::size_t k : {1u, 3u, 5u, 9u}) {
    std::size_t passes = 0;
    const Message m = explain_erasure(c, x, k, &passes);
    CHECK(passes == std::min<std::size_t>(k, 5) + 1);
    CHECK(m.positions.size() == std::min<std::size_t>(k, 5));
  }
  std::size_t topk_passes = 0;
  const Message top = explain_topk_attention(c, x, 1, &topk_passes);
  CHECK(topk_passes == 1);
  CHECK(explain_erasure(c, x, 1).positions == top.positions);

  const Example two = make_example({7, 8});
  CHECK(explain_erasure(c, two, 2).tokens == std::vector<TokenId>{7, 8});
  CHECK(kind_of([&] { explain_erasure(c, x, 0); }) == ErrorKind::Contract);
}

TEST_CASE("erasure picks the argmax of attention after each erasure") {
  const AttentionClassifier c(tiny_config(Transform::softmax()));
  const Example x = make_example({2, 3, 4, 5, 6, 7});
  const Message m = explain_erasure(c, x, 3);
  // Replay the loop by hand through classify.
  ForwardOptions opt;
  opt.erased.assign(x.tokens.size(), false);
  std::set<std::size_t> picked;
  for (int r = 0; r < 3; ++r) {
    const auto probs = c.classify(x, opt).attention.probs;
    std::size_t best = x.tokens.size();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (opt.erased[i]) continue;
      if (best == x.tokens.size() || probs[i] > probs[best]) best = i;
    }
    opt.erased[best] = true;
    picked.insert(best);
  }
  CHECK(std::vector<std::size_t>(picked.begin(), picked.end()) == m.positions);
}

TEST_CASE("input x gradient on a linear probe matches |w_y . e_i|") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t d = 4, len = 6, classes = 3;
  Tensor w = Tensor::zeros({classes, d});
  for (auto& v : w.data) v = n(rng);
  std::vector<Tensor> rows;
  for (std::size_t i = 0; i < len; ++i) {
    Tensor e = Tensor::zeros({d});
    for (auto& v : e.data) v = n(rng);
    rows.push_back(e);
  }
  ad::Graph g;
  std::vector<ad::Var> emb;
  for (const auto& r : rows) emb.push_back(g.input(r));
  ad::Var bag = emb[0];
  for (std::size_t i = 1; i < len; ++i) bag = ad::add(bag, emb[i]);
  const ad::Var logits = ad::matmul(g.constant(w), bag);
  const std::size_t y = argmax(logits.value().data);
  const auto scores = input_x_gradient(g, ad::slice(logits, y, 1), emb);

  for (std::size_t i = 0; i < len; ++i) {
    double expect = 0.0;
    for (std::size_t j = 0; j < d; ++j) expect += w.data[y * d + j] * rows[i].data[j];
    CHECK(scores[i] == doctest::Approx(std::abs(expect)).epsilon(1e-12));
  }
}

TEST_CASE("gradient scores match a directional finite difference") {
  AttentionClassifier c(tiny_config(Transform::sparsemax()));
  const Example x = make_example({2, 3, 4, 5, 6});
  const auto scores = gradient_scores(c, x);
  const std::size_t y = c.classify(x).label;
  auto& embed = c.parameters().get("embed");
  const std::size_t d = c.config().embedding_dim;
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    // ⟨∇, e⟩ is the derivative of the logit along e scaled by (1 + t).
    double* row = embed.value.data.data() + x.tokens[i] * d;
    const std::vector<double> orig(row, row + d);
    auto logit_at = [&](double t) {
      for (std::size_t j = 0; j < d; ++j) row[j] = orig[j] * (1.0 + t);
      return c.classify(x).logits[y];
    };
    const double fd = (logit_at(h) - logit_at(-h)) / (2 * h);
    logit_at(0.0);
    CHECK(scores[i] == doctest::Approx(std::abs(fd)).epsilon(1e-5));
  }
}

TEST_CASE("gradient explainer: zero embeddings fall back to earliest positions") {
  AttentionClassifier c(tiny_config(Transform::softmax()));
  for (auto& v : c.parameters().get("embed").value.data) v = 0.0;
  const Example x = make_example({2, 3, 4, 5, 6});
  for (double s : gradient_scores(c, x)) CHECK(s == 0.0);
  CHECK(explain_topk_gradient(c, x, 3).positions == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("duplicate tokens collapse in the message") {
  AttentionClassifier c(tiny_config(Transform::softmax()));
  for (auto& v : c.parameters().get("embed").value.data) v = 0.0;
  const Example x = make_example({4, 4, 5});
  const Message m = explain_topk_gradient(c, x, 2);
  CHECK(m.positions == std::vector<std::size_t>{0, 1});
  CHECK(m.tokens == std::vector<TokenId>{4});
}

TEST_CASE("selective attention returns the support and contains top-k") {
  const auto& t = trained();
  for (std::size_t i = 0; i < 50; ++i) {
    const Example& x = t.corpus.dev[i];
    const Message sel = explain_selective(*t.sparsemax_model, x);
    const auto support = t.sparsemax_model->classify(x).attention.support;
    CHECK(sel.positions == support);
    CHECK(sel.k_requested == std::nullopt);
    for (std::size_t k = 1; k <= support.size(); ++k) {
      const Message top = explain_topk_attention(*t.sparsemax_model, x, k);
      CHECK(std::includes(sel.positions.begin(), sel.positions.end(),
                          top.positions.begin(), top.positions.end()));
    }
  }
  CHECK(kind_of([&] { explain_selective(*t.softmax_model, t.corpus.dev[0]); }) ==
        ErrorKind::Config);
  ExplainerConfig sc;
  sc.kind = ExplainerKind::Selective;
  CHECK(kind_of([&] { make_explainer(sc, t.softmax_model.get()); }) == ErrorKind::Config);
}

TEST_CASE("erasure and top-k attention agree on a trained model") {
  const auto& t = trained();
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& x : t.corpus.dev) {
    total += jaccard(explain_erasure(*t.softmax_model, x, 3).tokens,
                     explain_topk_attention(*t.softmax_model, x, 3).tokens);
    ++n;
  }
  MESSAGE("mean erasure/top-k overlap " << total / n);
  CHECK(total / n >= 0.5);
}

TEST_CASE("human highlights") {
  Example x = make_example({3, 4, 5, 4});
  CHECK(kind_of([&] { explain_human_highlights(x); }) == ErrorKind::Data);
  x.highlights = std::vector<std::size_t>{};
  CHECK(explain_human_highlights(x).tokens.empty());
  x.highlights = std::vector<std::size_t>{0, 1, 2, 3};
  CHECK(explain_human_highlights(x).tokens == std::vector<TokenId>{3, 4, 5});
  x.highlights = std::vector<std::size_t>{3};
  CHECK(explain_human_highlights(x).tokens == std::vector<TokenId>{4});
}

TEST_CASE("every explainer emits valid messages on random inputs") {
  const std::size_t vocab = 12;
  const AttentionClassifier soft(tiny_config(Transform::softmax(), vocab));
  const AttentionClassifier sparse(tiny_config(Transform::sparsemax(), vocab));
  std::vector<bool> stop(vocab, false);
  stop[2] = stop[3] = true;
  JointConfig jc;
  jc.embedding_dim = 5;
  jc.hidden_size = 4;
  const JointExplainer joint(jc, Task::TextClassification, vocab, 2, 8, stop);

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len_d(1, 9), k_d(0, 6);
  std::uniform_int_distribution<TokenId> tok_d(2, static_cast<TokenId>(vocab - 1));
  for (int draw = 0; draw < 1000; ++draw) {
    Example x = make_example({}, "d" + std::to_string(draw));
    const std::size_t len = len_d(rng);
    for (std::size_t i = 0; i < len; ++i) x.tokens.push_back(tok_d(rng));
    // Trailing padding, as in a batch.
    for (std::size_t i = 0; i < draw % 3; ++i) x.tokens.push_back(Vocabulary::kPad);
    const std::size_t k = k_d(rng);

    check_message(explain_random(x, k, draw), x, k);
    check_message(explain_topk_attention(soft, x, k), x, k);
    check_message(explain_topk_gradient(soft, x, k), x, k);
    if (k > 0) check_message(explain_erasure(soft, x, k), x, k);
    check_message(explain_selective(sparse, x), x, std::nullopt);
    const Message jm = joint.explain(x, k, draw % 2);
    check_message(jm, x, k);
    for (auto id : jm.tokens) CHECK_FALSE(stop[id]);
  }
}

TEST_CASE("explainers are deterministic") {
  const auto& t = trained();
  for (auto kind : {ExplainerKind::Random, ExplainerKind::Erasure,
                    ExplainerKind::TopkGradient, ExplainerKind::TopkAttention}) {
    ExplainerConfig cfg;
    cfg.kind = kind;
    cfg.k = 3;
    cfg.seed = 4;
    const auto a = make_explainer(cfg, t.softmax_model.get());
    const auto b = make_explainer(cfg, t.softmax_model.get());
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(a->explain(t.corpus.dev[i]).positions == b->explain(t.corpus.dev[i]).positions);
    }
  }
}

TEST_CASE("joint training: dimension check, frozen classifier, stopword-free messages") {
  const auto& t = trained();
  const auto& c = *t.softmax_model;
  const std::size_t state = 2 * c.config().hidden_size;
  LaypersonConfig lc;
  lc.vocab_size = t.corpus.vocab.size();
  JointConfig jc;
  jc.embedding_dim = 16;
  jc.hidden_size = 16;
  jc.k = 3;
  TrainConfig tc;
  tc.epochs = 1;
  tc.patience = 1;
  tc.batch_size = 16;

  {
    JointExplainer bad(jc, Task::TextClassification, t.corpus.vocab.size(), 2, state + 1,
                       t.corpus.vocab.stopword_flags());
    BowLayperson l(lc);
    CHECK(kind_of([&] { train_joint(bad, l, c, t.corpus, tc); }) == ErrorKind::Config);
  }

  JointExplainer e(jc, Task::TextClassification, t.corpus.vocab.size(), 2, state,
                   t.corpus.vocab.stopword_flags());
  BowLayperson l(lc);
  const std::string before = parameter_hash(c.parameters());
  const auto r = train_joint(e, l, c, t.corpus, tc);
  CHECK(parameter_hash(c.parameters()) == before);
  CHECK(r.classifier_calls == t.corpus.train.size() + t.corpus.dev.size());

  std::size_t stop_hits = 0;
  for (const auto& x : t.corpus.dev) {
    for (auto id : e.explain(x, jc.k, c.classify(x).label).tokens) {
      stop_hits += t.corpus.vocab.is_stopword(id);
    }
  }
  CHECK(stop_hits == 0);

  // Round trip through a checkpoint bundle.
  JointExplainer copy(jc, Task::TextClassification, t.corpus.vocab.size(), 2, state,
                      t.corpus.vocab.stopword_flags());
  copy.load(e.to_bundle());
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& x = t.corpus.dev[i];
    CHECK(copy.explain(x, 3, 1).positions == e.explain(x, 3, 1).positions);
  }
}

TEST_CASE("latent reconstruction game lowers its loss every epoch") {
  const auto& t = trained();
  const auto& c = *t.softmax_model;
  LaypersonConfig lc;
  lc.vocab_size = t.corpus.vocab.size();
  JointConfig jc;
  jc.embedding_dim = 16;
  jc.hidden_size = 16;
  jc.lambda = 0.0;
  jc.beta = 0.0;
  jc.k = 3;
  TrainConfig tc;
  tc.epochs = 3;
  tc.patience = 3;
  tc.batch_size = 16;
  tc.lr = 3e-3;
  JointExplainer e(jc, Task::TextClassification, t.corpus.vocab.size(), 2,
                   2 * c.config().hidden_size, t.corpus.vocab.stopword_flags());
  BowLayperson l(lc);
  const auto r = train_joint(e, l, c, t.corpus, tc);
  std::vector<double> losses;
  for (const auto& m : r.train.log) {
    if (m.split == "train") losses.push_back(m.value);
  }
  REQUIRE(losses.size() == 3);
  CHECK(losses[1] < losses[0]);
  CHECK(losses[2] < losses[1]);
}

TEST_CASE("explanation dump round trip and layperson items") {
  const auto& t = trained();
  ExplainerConfig cfg;
  cfg.kind = ExplainerKind::TopkAttention;
  cfg.k = 2;
  const auto ex = make_explainer(cfg, t.softmax_model.get());
  const std::span<const Example> some(t.corpus.dev.data(), 10);
  auto records = explain_split(*ex, t.softmax_model.get(), some, t.corpus.vocab,
                               t.corpus.labels, cfg.k);
  REQUIRE(records.size() == 10);
  records[0].y_tilde = records[0].y_hat;
  testutil::TempDir dir;
  write_dump(dir.path / "dump.jsonl", records);
  const auto back = read_dump(dir.path / "dump.jsonl");
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].to_json() == records[i].to_json());
  }
  const auto items = layperson_items(back, t.corpus.vocab, t.corpus.labels);
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(items[i].target == t.softmax_model->classify(some[i]).label);
    CHECK(items[i].gold == some[i].label);
    CHECK(items[i].message == ex->explain(some[i]).tokens);
  }

  Example human = t.corpus.dev[0];
  human.highlights = std::vector<std::size_t>{0};
  ExplainerConfig hc;
  hc.kind = ExplainerKind::HumanHighlights;
  const auto h = make_explainer(hc, nullptr);
  const auto hr = explain_split(*h, nullptr, std::span(&human, 1), t.corpus.vocab,
                                t.corpus.labels, std::nullopt);
  CHECK(hr[0].y_hat == hr[0].y);

  dir.write("broken.jsonl", "{\"example_id\": 1}\n");
  CHECK(kind_of([&] { read_dump(dir.path / "broken.jsonl"); }) == ErrorKind::Format);
}
