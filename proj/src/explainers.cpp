#include "commx/explainers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "commx/error.hpp"
#include "commx/hash.hpp"

namespace commx {

namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> d(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = d(rng);
  return t;
}

std::size_t count_true(const std::vector<bool>& v) {
  return static_cast<std::size_t>(std::count(v.begin(), v.end(), true));
}

std::uint64_t example_seed(std::uint64_t seed, const std::string& id) {
  Fnv1a h;
  h.update(&seed, sizeof seed);
  h.update(id);
  return h.value();
}

}  // namespace

Message Message::from_positions(const Example& x, std::vector<std::size_t> positions,
                                std::optional<std::size_t> k) {
  Message m;
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  std::set<TokenId> ids;
  for (auto p : positions) {
    if (p >= x.tokens.size()) {
      fail(ErrorKind::Contract, "message position " + std::to_string(p) +
                                    " outside input of length " +
                                    std::to_string(x.tokens.size()));
    }
    ids.insert(x.tokens[p]);
  }
  m.tokens.assign(ids.begin(), ids.end());
  m.positions = std::move(positions);
  m.k_requested = k;
  m.hypothesis = x.hypothesis;
  return m;
}

std::string to_string(ExplainerKind kind) {
  switch (kind) {
    case ExplainerKind::Random: return "random";
    case ExplainerKind::Erasure: return "erasure";
    case ExplainerKind::TopkGradient: return "topk_gradient";
    case ExplainerKind::TopkAttention: return "topk_attention";
    case ExplainerKind::Selective: return "selective_attention";
    case ExplainerKind::Joint: return "joint";
    case ExplainerKind::HumanHighlights: return "human_highlights";
  }
  return "unknown";
}

ExplainerKind parse_explainer_kind(std::string_view text) {
  for (auto k : {ExplainerKind::Random, ExplainerKind::Erasure,
                 ExplainerKind::TopkGradient, ExplainerKind::TopkAttention,
                 ExplainerKind::Selective, ExplainerKind::Joint,
                 ExplainerKind::HumanHighlights}) {
    if (to_string(k) == text) return k;
  }
  if (text == "selective") return ExplainerKind::Selective;
  fail(ErrorKind::Config, "unknown explainer: " + std::string(text));
}

void ExplainerConfig::validate() const {
  switch (kind) {
    case ExplainerKind::Random:
    case ExplainerKind::TopkGradient:
    case ExplainerKind::TopkAttention:
    case ExplainerKind::Joint:
      if (!k) fail(ErrorKind::Config, to_string(kind) + " needs k");
      break;
    case ExplainerKind::Erasure:
      if (!k || *k == 0) fail(ErrorKind::Config, "erasure needs k >= 1");
      break;
    case ExplainerKind::Selective:
      if (k) fail(ErrorKind::Config, "selective attention takes no k");
      break;
    case ExplainerKind::HumanHighlights:
      break;
  }
}

nlohmann::json ExplainerConfig::to_json() const {
  nlohmann::json j = {{"kind", to_string(kind)}, {"seed", seed}};
  j["k"] = k ? nlohmann::json(*k) : nlohmann::json(nullptr);
  return j;
}

std::vector<std::size_t> top_k_positions(std::span<const double> scores,
                                         const std::vector<bool>& eligible,
                                         std::size_t k) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (eligible.empty() || eligible[i]) idx.push_back(i);
  }
  k = std::min(k, idx.size());
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<bool> content_positions(const Example& x) {
  std::vector<bool> out(x.tokens.size());
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    out[i] = x.tokens[i] != Vocabulary::kPad;
  }
  return out;
}

Message explain_random(const Example& x, std::size_t k, std::uint64_t seed) {
  const auto content = content_positions(x);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (content[i]) pool.push_back(i);
  }
  std::vector<std::size_t> picked;
  if (k >= pool.size()) {
    picked = pool;
  } else {
    Rng rng(seed);
    std::sample(pool.begin(), pool.end(), std::back_inserter(picked), k, rng);
  }
  return Message::from_positions(x, std::move(picked), k);
}

Message explain_erasure(const AttentionClassifier& c, const Example& x,
                        std::size_t k, std::size_t* forward_passes) {
  if (k == 0) fail(ErrorKind::Contract, "erasure needs k >= 1");
  const auto content = content_positions(x);
  const std::size_t rounds = std::min(k, count_true(content));
  std::size_t passes = 1;
  c.classify(x);
  ForwardOptions opt;
  opt.erased.assign(x.tokens.size(), false);
  std::vector<std::size_t> picked;
  for (std::size_t r = 0; r < rounds; ++r) {
    const auto p = c.classify(x, opt);
    ++passes;
    std::vector<bool> open(x.tokens.size());
    for (std::size_t i = 0; i < open.size(); ++i) open[i] = content[i] && !opt.erased[i];
    const auto best = top_k_positions(p.attention.probs, open, 1);
    opt.erased[best[0]] = true;
    picked.push_back(best[0]);
  }
  if (forward_passes) *forward_passes += passes;
  return Message::from_positions(x, std::move(picked), k);
}

std::vector<double> input_x_gradient(ad::Graph& g, ad::Var target,
                                     std::span<const ad::Var> embeddings) {
  g.backward(target);
  std::vector<double> scores;
  scores.reserve(embeddings.size());
  for (auto e : embeddings) {
    const auto grad = g.grad(e);
    const auto& v = e.value().data;
    double s = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) s += grad.data[j] * v[j];
    scores.push_back(std::abs(s));
  }
  return scores;
}

std::vector<double> gradient_scores(const AttentionClassifier& c,
                                    const Example& x) {
  ad::Graph g;
  ForwardOptions opt;
  opt.embedding_inputs = true;
  const auto cg = c.build(g, x, opt);
  const std::size_t label = argmax(cg.logits.value().data);
  auto scores = input_x_gradient(g, ad::slice(cg.logits, label, 1), cg.embeddings);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!cg.mask[i]) scores[i] = 0.0;
  }
  return scores;
}

Message explain_topk_gradient(const AttentionClassifier& c, const Example& x,
                              std::size_t k) {
  const auto scores = gradient_scores(c, x);
  return Message::from_positions(x, top_k_positions(scores, content_positions(x), k), k);
}

Message explain_topk_attention(const AttentionClassifier& c, const Example& x,
                               std::size_t k, std::size_t* forward_passes) {
  const auto p = c.classify(x);
  if (forward_passes) ++*forward_passes;
  return Message::from_positions(
      x, top_k_positions(p.attention.probs, content_positions(x), k), k);
}

Message explain_selective(const AttentionClassifier& c, const Example& x) {
  if (!c.config().transform.sparse()) {
    fail(ErrorKind::Config,
         "selective attention needs a sparse head, classifier uses " +
             c.config().transform.name());
  }
  const auto p = c.classify(x);
  return Message::from_positions(x, p.attention.support, std::nullopt);
}

Message explain_human_highlights(const Example& x) {
  if (!x.highlights) {
    fail(ErrorKind::Data, "example " + x.id + " has no highlight mask");
  }
  return Message::from_positions(x, *x.highlights, std::nullopt);
}

nlohmann::json JointConfig::to_json() const {
  return {{"embedding_dim", embedding_dim}, {"hidden_size", hidden_size},
          {"lambda", lambda},               {"beta", beta},
          {"k", k},                         {"seed", seed}};
}

JointConfig JointConfig::from_json(const nlohmann::json& j) {
  JointConfig c;
  try {
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.lambda = j.value("lambda", c.lambda);
    c.beta = j.value("beta", c.beta);
    c.k = j.value("k", c.k);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("joint config: ") + e.what());
  }
  if (c.beta < 0.0 || c.beta > 1.0) fail(ErrorKind::Config, "beta must lie in [0, 1]");
  if (c.lambda < 0.0) fail(ErrorKind::Config, "lambda must be >= 0");
  return c;
}

namespace {

ClassifierConfig encoder_config(const JointConfig& j, Task task,
                                std::size_t vocab_size, std::size_t n_classes) {
  ClassifierConfig c;
  c.task = task;
  c.vocab_size = vocab_size;
  c.n_classes = n_classes;
  c.embedding_dim = j.embedding_dim;
  c.hidden_size = j.hidden_size;
  c.transform = Transform::sparsemax();
  c.seed = j.seed;
  return c;
}

}  // namespace

JointExplainer::JointExplainer(JointConfig config, Task task, std::size_t vocab_size,
                               std::size_t n_classes, std::size_t classifier_state_dim,
                               std::vector<bool> stopwords)
    : cfg_(std::move(config)),
      task_(task),
      n_classes_(n_classes),
      state_dim_(classifier_state_dim),
      stopwords_(std::move(stopwords)),
      encoder_(encoder_config(cfg_, task, vocab_size, n_classes)) {
  if (stopwords_.size() != vocab_size) {
    fail(ErrorKind::Dimension, "stopword flags do not match the vocabulary size");
  }
  if (state_dim_ == 0) fail(ErrorKind::Config, "classifier state size must be positive");
  Rng rng(cfg_.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t s = 2 * cfg_.hidden_size;
  const double b = 1.0 / std::sqrt(static_cast<double>(s));
  // Starts at zero so an explainer that never sees ŷ is unaffected by it.
  head_.add("label", Tensor::zeros({n_classes_, s}));
  head_.add("ffn.w1", uniform({s, s}, b, rng));
  head_.add("ffn.b1", Tensor::zeros({s}));
  head_.add("ffn.w2", uniform({state_dim_, s}, b, rng));
  head_.add("ffn.b2", Tensor::zeros({state_dim_}));
}

std::vector<bool> JointExplainer::eligible(const Example& x) const {
  std::vector<bool> out(x.tokens.size());
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    const TokenId id = x.tokens[i];
    out[i] = id != Vocabulary::kPad && id < stopwords_.size() && !stopwords_[id];
  }
  return out;
}

JointExplainer::Pass JointExplainer::forward(ad::Graph& g, const Example& x,
                                             std::optional<std::size_t> y_hat) const {
  Pass pass;
  const auto ok = eligible(x);
  pass.empty = count_true(ok) == 0;
  ForwardOptions opt;
  if (!pass.empty) {
    opt.excluded.resize(ok.size());
    for (std::size_t i = 0; i < ok.size(); ++i) opt.excluded[i] = !ok[i];
  }
  if (y_hat) {
    if (*y_hat >= n_classes_) fail(ErrorKind::Label, "prediction outside class set");
    opt.query_offset = g.param_row(head_.get("label"), *y_hat);
  }
  pass.graph = encoder_.build(g, x, opt);
  return pass;
}

ad::Var JointExplainer::faithfulness(ad::Graph& g, const Pass& pass) const {
  const ad::Var w1 = g.param(head_.get("ffn.w1"));
  const ad::Var b1 = g.param(head_.get("ffn.b1"));
  const ad::Var w2 = g.param(head_.get("ffn.w2"));
  const ad::Var b2 = g.param(head_.get("ffn.b2"));
  std::vector<ad::Var> mapped;
  for (std::size_t i = 0; i < pass.graph.states.size(); ++i) {
    if (!pass.graph.mask[i]) continue;
    const ad::Var hidden = ad::tanh(ad::add(ad::matmul(w1, pass.graph.states[i]), b1));
    mapped.push_back(ad::add(ad::matmul(w2, hidden), b2));
  }
  return ad::average(mapped);
}

Message JointExplainer::explain(const Example& x, std::size_t k,
                                std::optional<std::size_t> y_hat) const {
  ad::Graph g;
  const Pass pass = forward(g, x, y_hat);
  if (pass.empty) return Message::from_positions(x, {}, k);
  return Message::from_positions(
      x, top_k_positions(pass.graph.attention.value().data, eligible(x), k), k);
}

std::vector<ad::ParameterStore*> JointExplainer::stores() {
  return {&encoder_.parameters(), &head_};
}

CheckpointBundle JointExplainer::to_bundle() const {
  CheckpointBundle b;
  b.kind = "joint";
  for (auto [prefix, store] : {std::pair{"encoder.", &encoder_.parameters()},
                               std::pair{"head.", static_cast<const ad::ParameterStore*>(&head_)}}) {
    for (std::size_t i = 0; i < store->size(); ++i) {
      b.parameters.push_back({prefix + (*store)[i].name, (*store)[i].value});
    }
  }
  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < stopwords_.size(); ++i) {
    if (stopwords_[i]) flagged.push_back(i);
  }
  b.config["joint"] = cfg_.to_json();
  b.config["task"] = to_string(task_);
  b.config["vocab_size"] = stopwords_.size();
  b.config["n_classes"] = n_classes_;
  b.config["state_dim"] = state_dim_;
  b.config["stopword_ids"] = flagged;
  return b;
}

void JointExplainer::load(const CheckpointBundle& b) {
  if (b.kind != "joint") fail(ErrorKind::Format, "expected a joint checkpoint, got " + b.kind);
  std::size_t used = 0;
  for (const auto& nt : b.parameters) {
    ad::ParameterStore* store = nullptr;
    std::string name;
    if (nt.name.rfind("encoder.", 0) == 0) {
      store = &encoder_.parameters();
      name = nt.name.substr(8);
    } else if (nt.name.rfind("head.", 0) == 0) {
      store = &head_;
      name = nt.name.substr(5);
    }
    if (!store || !store->contains(name)) {
      fail(ErrorKind::Format, "checkpoint parameter not in joint model: " + nt.name);
    }
    auto& p = store->get(name);
    if (p.value.shape != nt.value.shape) {
      fail(ErrorKind::Dimension, "checkpoint parameter " + nt.name + " has shape " +
                                     shape_string(nt.value.shape));
    }
    p.value = nt.value;
    ++used;
  }
  if (used != encoder_.parameters().size() + head_.size()) {
    fail(ErrorKind::Format, "joint checkpoint is missing parameters");
  }
}

JointTrainResult train_joint(JointExplainer& e, BowLayperson& l,
                             const AttentionClassifier& c, const Corpus& corpus,
                             const TrainConfig& config, const MetricSink& sink) {
  const std::size_t h_dim = 2 * c.config().hidden_size;
  if (e.state_dim() != h_dim) {
    fail(ErrorKind::Config, "faithfulness target has size " + std::to_string(h_dim) +
                                " but the explainer maps to " + std::to_string(e.state_dim()));
  }
  if (l.config().n_classes != c.config().n_classes || l.config().task != c.config().task) {
    fail(ErrorKind::Config, "layperson and classifier disagree on task or classes");
  }
  if (config.epochs > 0 && corpus.dev.empty()) fail(ErrorKind::Data, "corpus has no dev split");

  JointTrainResult out;
  struct Target {
    std::size_t y_hat;
    Tensor h;
  };
  auto targets = [&](std::span<const Example> split) {
    std::vector<Target> t;
    t.reserve(split.size());
    for (const auto& ex : split) {
      auto p = c.classify(ex);
      ++out.classifier_calls;
      t.push_back({p.label, Tensor::vector(std::move(p.mean_state))});
    }
    return t;
  };
  const auto train_t = targets(corpus.train);
  const auto dev_t = targets(corpus.dev);

  const JointConfig& jc = e.config();
  const double total = static_cast<double>(std::max<std::size_t>(1, config.epochs * corpus.train.size()));
  std::size_t seen = 0;
  Rng coin_rng(jc.seed + 17);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  const auto loss = [&](ad::Graph& g, std::size_t i) {
    const Example& x = corpus.train[i];
    const Target& t = train_t[i];
    const double p_access = jc.beta * std::min(1.0, static_cast<double>(seen++) / total);
    const bool access = coin(coin_rng) < p_access;
    const auto pass = e.forward(g, x, access ? std::optional(t.y_hat) : std::nullopt);
    const ad::Var logits = pass.empty
                               ? l.logits(g, {}, x.hypothesis)
                               : l.soft_logits(g, pass.graph.attention, x.tokens, x.hypothesis);
    ad::Var total_loss = ad::cross_entropy(logits, t.y_hat);
    if (jc.lambda > 0.0) {
      const ad::Var omega = ad::squared_distance(e.faithfulness(g, pass), g.constant(t.h));
      total_loss = ad::add(total_loss, ad::scale(omega, jc.lambda));
    }
    return total_loss;
  };
  const auto dev = [&] {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < corpus.dev.size(); ++i) {
      const auto m = e.explain(corpus.dev[i], jc.k, dev_t[i].y_hat);
      agree += l.predict(m.tokens, m.hypothesis) == dev_t[i].y_hat;
    }
    return static_cast<double>(agree) / static_cast<double>(corpus.dev.size());
  };
  auto stores = e.stores();
  stores.push_back(&l.parameters());
  TrainConfig tc = config;
  tc.dev_metric = DevMetric::Csr;
  out.train = fit(stores, corpus.train.size(), loss, dev, tc, "joint", sink);
  out.train.best = e.to_bundle();
  return out;
}

namespace {

class RandomExplainer final : public Explainer {
 public:
  RandomExplainer(std::size_t k, std::uint64_t seed) : k_(k), seed_(seed) {}
  std::string name() const override { return "random"; }
  Message explain(const Example& x) const override {
    return explain_random(x, k_, example_seed(seed_, x.id));
  }

 private:
  std::size_t k_;
  std::uint64_t seed_;
};

class ClassifierExplainer final : public Explainer {
 public:
  ClassifierExplainer(ExplainerKind kind, std::optional<std::size_t> k,
                      const AttentionClassifier& c)
      : kind_(kind), k_(k), c_(c) {}
  std::string name() const override { return to_string(kind_); }
  Message explain(const Example& x) const override {
    switch (kind_) {
      case ExplainerKind::Erasure: return explain_erasure(c_, x, *k_);
      case ExplainerKind::TopkGradient: return explain_topk_gradient(c_, x, *k_);
      case ExplainerKind::TopkAttention: return explain_topk_attention(c_, x, *k_);
      case ExplainerKind::Selective: return explain_selective(c_, x);
      default: break;
    }
    fail(ErrorKind::Contract, "not a classifier-based explainer");
  }

 private:
  ExplainerKind kind_;
  std::optional<std::size_t> k_;
  const AttentionClassifier& c_;
};

class JointAdapter final : public Explainer {
 public:
  JointAdapter(std::size_t k, const AttentionClassifier& c, const JointExplainer& e)
      : k_(k), c_(c), e_(e) {}
  std::string name() const override { return "joint"; }
  Message explain(const Example& x) const override {
    return e_.explain(x, k_, c_.classify(x).label);
  }

 private:
  std::size_t k_;
  const AttentionClassifier& c_;
  const JointExplainer& e_;
};

class HumanExplainer final : public Explainer {
 public:
  std::string name() const override { return "human_highlights"; }
  Message explain(const Example& x) const override { return explain_human_highlights(x); }
};

}  // namespace

std::unique_ptr<Explainer> make_explainer(const ExplainerConfig& cfg,
                                          const AttentionClassifier* classifier,
                                          const JointExplainer* joint) {
  cfg.validate();
  switch (cfg.kind) {
    case ExplainerKind::Random:
      return std::make_unique<RandomExplainer>(*cfg.k, cfg.seed);
    case ExplainerKind::HumanHighlights:
      return std::make_unique<HumanExplainer>();
    case ExplainerKind::Joint:
      if (!classifier || !joint) {
        fail(ErrorKind::Config, "joint explainer needs a classifier and a joint checkpoint");
      }
      return std::make_unique<JointAdapter>(*cfg.k, *classifier, *joint);
    default:
      if (!classifier) fail(ErrorKind::Config, to_string(cfg.kind) + " needs a classifier");
      if (cfg.kind == ExplainerKind::Selective && !classifier->config().transform.sparse()) {
        fail(ErrorKind::Config, "selective attention needs a sparse head, classifier uses " +
                                    classifier->config().transform.name());
      }
      return std::make_unique<ClassifierExplainer>(cfg.kind, cfg.k, *classifier);
  }
}

nlohmann::json ExplanationRecord::to_json() const {
  nlohmann::json j = {{"example_id", example_id},
                      {"explainer", explainer},
                      {"message_tokens", message_tokens},
                      {"positions", positions},
                      {"y_hat", y_hat},
                      {"y", y}};
  j["k"] = k ? nlohmann::json(*k) : nlohmann::json(nullptr);
  if (!hypothesis_tokens.empty()) j["hypothesis_tokens"] = hypothesis_tokens;
  if (y_tilde) j["y_tilde"] = *y_tilde;
  return j;
}

ExplanationRecord ExplanationRecord::from_json(const nlohmann::json& j) {
  ExplanationRecord r;
  r.example_id = j.at("example_id").get<std::string>();
  r.explainer = j.at("explainer").get<std::string>();
  if (j.contains("k") && !j["k"].is_null()) r.k = j["k"].get<std::size_t>();
  r.message_tokens = j.at("message_tokens").get<std::vector<std::string>>();
  r.positions = j.value("positions", std::vector<std::size_t>{});
  r.hypothesis_tokens = j.value("hypothesis_tokens", std::vector<std::string>{});
  r.y_hat = j.at("y_hat").get<std::string>();
  r.y = j.at("y").get<std::string>();
  if (j.contains("y_tilde") && !j["y_tilde"].is_null()) {
    r.y_tilde = j["y_tilde"].get<std::string>();
  }
  return r;
}

std::vector<ExplanationRecord> explain_split(const Explainer& explainer,
                                             const AttentionClassifier* classifier,
                                             std::span<const Example> examples,
                                             const Vocabulary& vocab,
                                             const LabelSet& labels,
                                             std::optional<std::size_t> k) {
  std::vector<ExplanationRecord> out;
  out.reserve(examples.size());
  for (const auto& x : examples) {
    // Without a classifier (human highlights) the gold label is the
    // prediction being explained.
    const std::size_t y_hat = classifier ? classifier->classify(x).label : x.label;
    const Message m = explainer.explain(x);
    ExplanationRecord r;
    r.example_id = x.id;
    r.explainer = explainer.name();
    r.k = k;
    for (auto id : m.tokens) r.message_tokens.push_back(vocab.token(id));
    r.positions = m.positions;
    for (auto id : m.hypothesis) r.hypothesis_tokens.push_back(vocab.token(id));
    r.y_hat = labels.names.at(y_hat);
    r.y = labels.names.at(x.label);
    out.push_back(std::move(r));
  }
  return out;
}

void write_dump(const std::filesystem::path& path,
                std::span<const ExplanationRecord> records) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<ExplanationRecord> read_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<ExplanationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(ExplanationRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<LaypersonItem> layperson_items(std::span<const ExplanationRecord> records,
                                           const Vocabulary& vocab,
                                           const LabelSet& labels) {
  std::vector<LaypersonItem> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    LaypersonItem it;
    for (const auto& t : r.message_tokens) it.message.push_back(vocab.id(t));
    for (const auto& t : r.hypothesis_tokens) it.hypothesis.push_back(vocab.id(t));
    it.target = labels.index(r.y_hat);
    it.gold = labels.index(r.y);
    out.push_back(std::move(it));
  }
  return out;
}

}  // namespace commx
