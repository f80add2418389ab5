#include "commx/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "commx/error.hpp"
#include "commx/optim.hpp"

namespace commx {

namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> d(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = d(rng);
  return t;
}

double fan_bound(std::size_t fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(fan_in));
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size,
               const char* what) {
  for (auto id : ids) {
    if (id >= vocab_size) {
      fail(ErrorKind::Data, std::string(what) + ": token id " +
                                std::to_string(id) + " outside vocabulary of " +
                                std::to_string(vocab_size));
    }
  }
}

std::vector<ad::Var> embed_sequence(ad::Graph& g, ad::Parameter& table,
                                    std::span<const TokenId> ids) {
  std::vector<ad::Var> out;
  for (auto id : ids) {
    if (id != Vocabulary::kPad) out.push_back(g.param_row(table, id));
  }
  return out;
}

const char* metric_name(DevMetric m) {
  return m == DevMetric::Csr ? "csr" : "accuracy";
}

nlohmann::json label_json(const LabelSet& labels) { return labels.names; }

}  // namespace

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::Dimension, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

nlohmann::json ClassifierConfig::to_json() const {
  return {{"task", to_string(task)},
          {"vocab_size", vocab_size},
          {"n_classes", n_classes},
          {"embedding_dim", embedding_dim},
          {"hidden_size", hidden_size},
          {"transform", transform.name()},
          {"zero_scorer", zero_scorer},
          {"freeze_embeddings", freeze_embeddings},
          {"seed", seed}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  try {
    ClassifierConfig c;
    c.task = parse_task(j.at("task").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    c.hidden_size = j.at("hidden_size").get<std::size_t>();
    c.transform = Transform::parse(j.at("transform").get<std::string>());
    c.zero_scorer = j.value("zero_scorer", false);
    c.freeze_embeddings = j.value("freeze_embeddings", false);
    c.seed = j.value("seed", std::uint64_t{1});
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("classifier config: ") + e.what());
  }
}

AttentionClassifier::AttentionClassifier(ClassifierConfig config,
                                         const EmbeddingTable* pretrained)
    : cfg_(std::move(config)) {
  if (pretrained) {
    if (pretrained->vectors.rows() != cfg_.vocab_size) {
      fail(ErrorKind::Dimension,
           "embedding table has " + std::to_string(pretrained->vectors.rows()) +
               " rows for a vocabulary of " + std::to_string(cfg_.vocab_size));
    }
    cfg_.embedding_dim = pretrained->dimension;
    cfg_.freeze_embeddings = pretrained->frozen;
  }
  if (cfg_.vocab_size < 2 || cfg_.n_classes < 1 || cfg_.embedding_dim == 0 ||
      cfg_.hidden_size == 0) {
    fail(ErrorKind::Config, "classifier: vocabulary, classes and sizes must be positive");
  }
  Rng rng(cfg_.seed);
  const std::size_t d = cfg_.embedding_dim, h = cfg_.hidden_size, s = 2 * h;

  Tensor emb = pretrained ? pretrained->vectors : uniform({cfg_.vocab_size, d}, 0.1, rng);
  std::fill_n(emb.data.begin(), d, 0.0);  // <pad>
  store_.add("embed", std::move(emb)).trainable = !cfg_.freeze_embeddings;
  add_lstm(store_, "enc.fwd", d, h, rng);
  add_lstm(store_, "enc.bwd", d, h, rng);
  if (cfg_.task == Task::Nli) {
    add_lstm(store_, "hyp.fwd", d, h, rng);
    add_lstm(store_, "hyp.bwd", d, h, rng);
  }
  store_.add("att.w_key", uniform({h, s}, fan_bound(s), rng));
  store_.add("att.w_query", uniform({h, s}, fan_bound(s), rng));
  Tensor v = uniform({h}, fan_bound(h), rng);
  if (cfg_.zero_scorer) v.fill(0.0);
  store_.add("att.v", std::move(v));
  if (cfg_.task == Task::TextClassification) {
    store_.add("att.query", uniform({s}, fan_bound(s), rng));
  }
  const std::size_t feat = cfg_.task == Task::Nli ? 2 * s : s;
  store_.add("out.w", uniform({cfg_.n_classes, feat}, fan_bound(feat), rng));
  store_.add("out.b", Tensor::zeros({cfg_.n_classes}));
  bind();
}

void AttentionClassifier::bind() {
  embed_ = &store_.get("embed");
  enc_fwd_ = bind_lstm(store_, "enc.fwd");
  enc_bwd_ = bind_lstm(store_, "enc.bwd");
  if (cfg_.task == Task::Nli) {
    hyp_fwd_ = bind_lstm(store_, "hyp.fwd");
    hyp_bwd_ = bind_lstm(store_, "hyp.bwd");
  }
  w_key_ = &store_.get("att.w_key");
  w_query_ = &store_.get("att.w_query");
  score_v_ = &store_.get("att.v");
  if (cfg_.task == Task::TextClassification) query_ = &store_.get("att.query");
  w_out_ = &store_.get("out.w");
  b_out_ = &store_.get("out.b");
}

ClassifierGraph AttentionClassifier::build(ad::Graph& g, const Example& x,
                                           const ForwardOptions& opt) const {
  const std::size_t n = x.tokens.size();
  const std::size_t d = cfg_.embedding_dim, s = 2 * cfg_.hidden_size;
  check_ids(x.tokens, cfg_.vocab_size, "classifier input");
  if (!opt.erased.empty() && opt.erased.size() != n) {
    fail(ErrorKind::Dimension, "erasure mask length differs from input length");
  }
  ClassifierGraph out;
  out.mask.resize(n);
  out.embeddings.resize(n);
  out.states.resize(n);
  std::vector<ad::Var> inputs;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId id = x.tokens[i];
    out.mask[i] = id != Vocabulary::kPad;
    if (!out.mask[i]) {
      out.embeddings[i] = g.constant(Tensor::zeros({d}));
      continue;
    }
    if (!opt.erased.empty() && opt.erased[i]) {
      out.embeddings[i] = opt.embedding_inputs ? g.input(Tensor::zeros({d}))
                                               : g.constant(Tensor::zeros({d}));
    } else if (opt.embedding_inputs) {
      const auto r = embed_->value.row(id);
      out.embeddings[i] = g.input(Tensor::vector({r.begin(), r.end()}));
    } else {
      out.embeddings[i] = g.param_row(*embed_, id);
    }
    inputs.push_back(out.embeddings[i]);
    where.push_back(i);
  }
  if (inputs.empty()) fail(ErrorKind::Data, "classifier input has no tokens");

  const auto enc = run_bilstm(g, inputs, enc_fwd_, enc_bwd_);
  for (std::size_t j = 0; j < where.size(); ++j) out.states[where[j]] = enc.states[j];
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.mask[i]) out.states[i] = g.constant(Tensor::zeros({s}));
  }

  if (cfg_.task == Task::Nli) {
    check_ids(x.hypothesis, cfg_.vocab_size, "classifier hypothesis");
    const auto hyp = embed_sequence(g, *embed_, x.hypothesis);
    if (hyp.empty()) fail(ErrorKind::Data, "NLI example has an empty hypothesis");
    out.query = run_bilstm(g, hyp, hyp_fwd_, hyp_bwd_).summary;
  } else {
    out.query = g.param(*query_);
  }
  ad::Var query = out.query;
  if (opt.query_offset) query = ad::add(query, *opt.query_offset);

  std::vector<bool> attend = out.mask;
  if (!opt.excluded.empty()) {
    if (opt.excluded.size() != n) {
      fail(ErrorKind::Dimension, "exclusion mask length differs from input length");
    }
    for (std::size_t i = 0; i < n; ++i) attend[i] = attend[i] && !opt.excluded[i];
    if (std::none_of(attend.begin(), attend.end(), [](bool b) { return b; })) {
      fail(ErrorKind::Data, "every position is excluded from attention");
    }
  }

  const ad::Var qproj = ad::matmul(g.param(*w_query_), query);
  const ad::Var wk = g.param(*w_key_);
  const ad::Var v = g.param(*score_v_);
  std::vector<ad::Var> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!attend[i]) {
      scores[i] = g.constant(Tensor::scalar(0.0));
      continue;
    }
    scores[i] = ad::dot(v, ad::tanh(ad::add(ad::matmul(wk, out.states[i]), qproj)));
  }
  ad::Var score_vec = ad::concat(scores);
  if (opt.score_shift != 0.0) {
    score_vec = ad::add(score_vec,
                        g.constant(Tensor::vector(std::vector<double>(n, opt.score_shift))));
  }
  out.attention = attention(score_vec, attend, cfg_.transform);
  out.context = ad::weighted_sum(out.attention, out.states);
  ad::Var feature = out.context;
  if (cfg_.task == Task::Nli) {
    const ad::Var parts[] = {out.context, out.query};
    feature = ad::concat(parts);
  }
  out.logits = ad::add(ad::matmul(g.param(*w_out_), feature), g.param(*b_out_));
  return out;
}

Prediction AttentionClassifier::classify(const Example& x,
                                         const ForwardOptions& opt) const {
  ad::Graph g;
  const auto cg = build(g, x, opt);
  Prediction p;
  p.logits = cg.logits.value().data;
  p.label = argmax(p.logits);
  p.attention = Distribution::from_probs(cg.attention.value().data);
  p.context = cg.context.value().data;
  const std::size_t n = x.tokens.size(), s = 2 * cfg_.hidden_size;
  p.states = Tensor::zeros({n, s});
  p.mean_state.assign(s, 0.0);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& st = cg.states[i].value().data;
    std::copy(st.begin(), st.end(), p.states.row(i).begin());
    if (!cg.mask[i]) continue;
    ++valid;
    for (std::size_t j = 0; j < s; ++j) p.mean_state[j] += st[j];
  }
  for (auto& m : p.mean_state) m /= static_cast<double>(valid);
  return p;
}

CheckpointBundle AttentionClassifier::to_bundle(const Vocabulary& vocab,
                                                const LabelSet& labels) const {
  auto b = CheckpointBundle::capture("classifier", store_);
  b.config["model"] = cfg_.to_json();
  b.config["labels"] = label_json(labels);
  b.config["vocab"] = vocab.to_json();
  b.vocab_fingerprint = vocab.fingerprint();
  return b;
}

AttentionClassifier AttentionClassifier::from_bundle(const CheckpointBundle& b) {
  if (b.kind != "classifier") {
    fail(ErrorKind::Format, "expected a classifier checkpoint, got " + b.kind);
  }
  if (!b.config.contains("model")) {
    fail(ErrorKind::Format, "checkpoint config lacks a model section");
  }
  AttentionClassifier m(ClassifierConfig::from_json(b.config["model"]));
  b.restore(m.store_);
  return m;
}

nlohmann::json LaypersonConfig::to_json() const {
  return {{"task", to_string(task)},       {"vocab_size", vocab_size},
          {"n_classes", n_classes},        {"embedding_dim", embedding_dim},
          {"hidden_size", hidden_size},    {"zero_init", zero_init},
          {"seed", seed}};
}

LaypersonConfig LaypersonConfig::from_json(const nlohmann::json& j) {
  try {
    LaypersonConfig c;
    c.task = parse_task(j.at("task").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.n_classes = j.at("n_classes").get<std::size_t>();
    c.embedding_dim = j.value("embedding_dim", std::size_t{64});
    c.hidden_size = j.value("hidden_size", std::size_t{64});
    c.zero_init = j.value("zero_init", false);
    c.seed = j.value("seed", std::uint64_t{1});
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("layperson config: ") + e.what());
  }
}

BowLayperson::BowLayperson(LaypersonConfig config) : cfg_(std::move(config)) {
  if (cfg_.vocab_size < 2 || cfg_.n_classes < 1) {
    fail(ErrorKind::Config, "layperson: vocabulary and classes must be positive");
  }
  Rng rng(cfg_.seed);
  auto init = [&](Shape shape, double bound) {
    return cfg_.zero_init ? Tensor::zeros(std::move(shape))
                          : uniform(std::move(shape), bound, rng);
  };
  if (cfg_.task == Task::TextClassification) {
    words_ = &store_.add("bow.words", init({cfg_.vocab_size, cfg_.n_classes}, 0.01));
    return;
  }
  const std::size_t d = cfg_.embedding_dim, h = cfg_.hidden_size, s = 2 * h;
  words_ = &store_.add("bow.words", init({cfg_.vocab_size, s}, 0.01));
  hyp_embed_ = &store_.add("hyp.embed", init({cfg_.vocab_size, d}, 0.1));
  if (cfg_.zero_init) {
    for (const char* p : {"hyp.fwd", "hyp.bwd"}) {
      store_.add(std::string(p) + ".w_input", Tensor::zeros({4 * h, d}));
      store_.add(std::string(p) + ".w_hidden", Tensor::zeros({4 * h, h}));
      store_.add(std::string(p) + ".bias", Tensor::zeros({4 * h}));
    }
  } else {
    add_lstm(store_, "hyp.fwd", d, h, rng);
    add_lstm(store_, "hyp.bwd", d, h, rng);
  }
  hyp_fwd_ = bind_lstm(store_, "hyp.fwd");
  hyp_bwd_ = bind_lstm(store_, "hyp.bwd");
  w_out_ = &store_.add("out.w", init({cfg_.n_classes, s}, fan_bound(s)));
  b_out_ = &store_.add("out.b", Tensor::zeros({cfg_.n_classes}));
}

ad::Var BowLayperson::finish(ad::Graph& g, ad::Var bag,
                             std::span<const TokenId> hypothesis) const {
  if (cfg_.task == Task::TextClassification) return bag;
  check_ids(hypothesis, cfg_.vocab_size, "layperson hypothesis");
  const auto hyp = embed_sequence(g, *hyp_embed_, hypothesis);
  if (hyp.empty()) fail(ErrorKind::Data, "NLI message has an empty hypothesis");
  const ad::Var z = ad::add(run_bilstm(g, hyp, hyp_fwd_, hyp_bwd_).summary, bag);
  return ad::add(ad::matmul(g.param(*w_out_), z), g.param(*b_out_));
}

ad::Var BowLayperson::logits(ad::Graph& g, std::span<const TokenId> message,
                             std::span<const TokenId> hypothesis) const {
  check_ids(message, cfg_.vocab_size, "layperson message");
  const std::set<TokenId> bag(message.begin(), message.end());
  ad::Var total;
  for (auto id : bag) {
    const ad::Var r = g.param_row(*words_, id);
    total = total.valid() ? ad::add(total, r) : r;
  }
  if (!total.valid()) total = g.constant(Tensor::zeros({words_->value.cols()}));
  return finish(g, total, hypothesis);
}

ad::Var BowLayperson::soft_logits(ad::Graph& g, ad::Var weights,
                                  std::span<const TokenId> tokens,
                                  std::span<const TokenId> hypothesis) const {
  check_ids(tokens, cfg_.vocab_size, "layperson message");
  std::vector<ad::Var> rows;
  rows.reserve(tokens.size());
  for (auto id : tokens) rows.push_back(g.param_row(*words_, id));
  return finish(g, ad::weighted_sum(weights, rows), hypothesis);
}

std::size_t BowLayperson::predict(std::span<const TokenId> message,
                                  std::span<const TokenId> hypothesis) const {
  ad::Graph g;
  return argmax(logits(g, message, hypothesis).value().data);
}

CheckpointBundle BowLayperson::to_bundle(const Vocabulary& vocab,
                                         const LabelSet& labels) const {
  auto b = CheckpointBundle::capture("layperson", store_);
  b.config["model"] = cfg_.to_json();
  b.config["labels"] = label_json(labels);
  b.config["vocab"] = vocab.to_json();
  b.vocab_fingerprint = vocab.fingerprint();
  return b;
}

BowLayperson BowLayperson::from_bundle(const CheckpointBundle& b) {
  if (b.kind != "layperson") {
    fail(ErrorKind::Format, "expected a layperson checkpoint, got " + b.kind);
  }
  BowLayperson m(LaypersonConfig::from_json(b.config.at("model")));
  b.restore(m.store_);
  return m;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    fail(ErrorKind::Config, "learning rate must be positive");
  }
  if (!(weight_decay >= 0.0)) fail(ErrorKind::Config, "weight decay must be >= 0");
  if (batch_size == 0) fail(ErrorKind::Config, "batch size must be positive");
  if (patience > epochs) {
    fail(ErrorKind::Config, "patience (" + std::to_string(patience) +
                                ") exceeds epochs (" + std::to_string(epochs) + ")");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"weight_decay", weight_decay},
          {"weight_decay_mode", "decoupled"},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"patience", patience},
          {"seed", seed},
          {"dev_metric", metric_name(dev_metric)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    const auto m = j.value("dev_metric", std::string("accuracy"));
    if (m == "csr") {
      c.dev_metric = DevMetric::Csr;
    } else if (m == "accuracy") {
      c.dev_metric = DevMetric::Accuracy;
    } else {
      fail(ErrorKind::Config, "unknown dev metric: " + m);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("train config: ") + e.what());
  }
  return c;
}

nlohmann::json MetricRecord::to_json() const {
  return {{"epoch", epoch}, {"split", split}, {"metric", metric}, {"value", value}};
}

namespace {

CheckpointBundle capture_all(const std::string& kind,
                             std::span<ad::ParameterStore* const> stores) {
  CheckpointBundle b;
  b.kind = kind;
  for (auto* s : stores) {
    auto part = CheckpointBundle::capture(kind, *s);
    for (auto& p : part.parameters) b.parameters.push_back(std::move(p));
  }
  return b;
}

void restore_all(const CheckpointBundle& b,
                 std::span<ad::ParameterStore* const> stores) {
  // Stores were captured in order, so names may repeat across stores.
  std::size_t at = 0;
  for (auto* s : stores) {
    for (std::size_t i = 0; i < s->size(); ++i) (*s)[i].value = b.parameters.at(at++).value;
  }
}

}  // namespace

TrainResult fit(std::span<ad::ParameterStore* const> stores, std::size_t n_train,
                const std::function<ad::Var(ad::Graph&, std::size_t)>& loss,
                const std::function<double()>& dev, const TrainConfig& cfg,
                const std::string& kind, const MetricSink& sink) {
  cfg.validate();
  TrainResult result;
  result.best = capture_all(kind, stores);
  result.best.dev_metric = -std::numeric_limits<double>::infinity();
  if (cfg.epochs == 0) return result;
  if (n_train == 0) fail(ErrorKind::Data, "training split is empty");

  std::vector<AdamW> opts(stores.size(), AdamW({cfg.lr, cfg.weight_decay}));
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  auto emit = [&](MetricRecord r) {
    if (sink) sink(r);
    result.log.push_back(std::move(r));
  };

  std::size_t since_best = 0, step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t end = std::min(n_train, start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      for (auto* s : stores) s->zero_grad();
      try {
        for (std::size_t b = start; b < end; ++b) {
          ad::Graph g;
          const ad::Var l = loss(g, order[b]);
          const double value = l.value().data[0];
          if (!std::isfinite(value)) fail(ErrorKind::Numeric, "non-finite loss");
          total += value;
          g.backward(ad::scale(l, inv));
        }
        for (std::size_t k = 0; k < stores.size(); ++k) {
          opts[k].step(*stores[k]);
          for (std::size_t i = 0; i < stores[k]->size(); ++i) {
            const auto& p = (*stores[k])[i];
            if (!p.value.all_finite()) {
              fail(ErrorKind::Numeric, "parameter " + p.name + " became non-finite");
            }
          }
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        fail(ErrorKind::Numeric, "training diverged at epoch " + std::to_string(epoch) +
                                     ", step " + std::to_string(step) + ": " + e.what());
      }
    }
    emit({epoch, "train", "loss", total / static_cast<double>(n_train)});
    const double metric = dev();
    emit({epoch, "dev", metric_name(cfg.dev_metric), metric});
    if (metric > result.best.dev_metric) {
      result.best = capture_all(kind, stores);
      result.best.dev_metric = metric;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore_all(result.best, stores);
  return result;
}

TrainResult fit(ad::ParameterStore& store, std::size_t n_train,
                const std::function<ad::Var(ad::Graph&, std::size_t)>& loss,
                const std::function<double()>& dev, const TrainConfig& cfg,
                const std::string& kind, const MetricSink& sink) {
  ad::ParameterStore* const stores[] = {&store};
  return fit(stores, n_train, loss, dev, cfg, kind, sink);
}

double accuracy(const AttentionClassifier& model,
                std::span<const Example> examples) {
  if (examples.empty()) fail(ErrorKind::Metric, "accuracy over an empty split");
  std::size_t correct = 0;
  for (const auto& ex : examples) correct += model.classify(ex).label == ex.label;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TrainResult train_classifier(AttentionClassifier& model, const Corpus& corpus,
                             const TrainConfig& config, const MetricSink& sink) {
  if (config.epochs > 0 && corpus.dev.empty()) {
    fail(ErrorKind::Data, "corpus has no dev split");
  }
  const auto loss = [&](ad::Graph& g, std::size_t i) {
    const Example& ex = corpus.train[i];
    return ad::cross_entropy(model.build(g, ex).logits, ex.label);
  };
  const auto dev = [&] { return accuracy(model, corpus.dev); };
  auto result = fit(model.parameters(), corpus.train.size(), loss, dev, config,
                    "classifier", sink);
  const double metric = result.best.dev_metric;
  result.best = model.to_bundle(corpus.vocab, corpus.labels);
  result.best.dev_metric = std::isfinite(metric) ? metric : 0.0;
  result.best.config["train"] = config.to_json();
  return result;
}

double layperson_csr(const BowLayperson& model,
                     std::span<const LaypersonItem> items) {
  if (items.empty()) fail(ErrorKind::Metric, "CSR over an empty item list");
  std::size_t agree = 0;
  for (const auto& it : items) {
    agree += model.predict(it.message, it.hypothesis) == it.target;
  }
  return static_cast<double>(agree) / static_cast<double>(items.size());
}

TrainResult train_layperson(BowLayperson& model,
                            std::span<const LaypersonItem> train,
                            std::span<const LaypersonItem> dev,
                            const TrainConfig& config, const MetricSink& sink) {
  if (config.epochs > 0 && dev.empty()) {
    fail(ErrorKind::Data, "layperson training needs dev items");
  }
  const auto loss = [&](ad::Graph& g, std::size_t i) {
    const auto& it = train[i];
    return ad::cross_entropy(model.logits(g, it.message, it.hypothesis), it.target);
  };
  const auto dev_fn = [&] { return layperson_csr(model, dev); };
  auto result = fit(model.parameters(), train.size(), loss, dev_fn, config,
                    "layperson", sink);
  if (!std::isfinite(result.best.dev_metric)) result.best.dev_metric = 0.0;
  result.best.config["train"] = config.to_json();
  result.best.config["model"] = model.config().to_json();
  return result;
}

}  // namespace commx
