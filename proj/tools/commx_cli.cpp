// Command-line entry points: corpus generation, training, explanation,
// evaluation, sweeps, joint training and the annotation service.

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "commx/checkpoint.hpp"
#include "commx/error.hpp"
#include "commx/explainers.hpp"
#include "commx/game.hpp"
#include "commx/models.hpp"
#include "commx/service.hpp"
#include "commx/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace commx;

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Appends every metric record to a JSON-lines file and echoes it to stderr.
class MetricLog {
 public:
  explicit MetricLog(const fs::path& path) : out_(path) {
    if (!out_) fail(ErrorKind::Io, "cannot write " + path.string());
  }
  MetricSink sink(std::string stage) {
    return [this, stage](const MetricRecord& r) {
      auto j = r.to_json();
      j["stage"] = stage;
      out_ << j.dump() << '\n';
      out_.flush();
      std::cerr << stage << " epoch " << r.epoch << " " << r.split << " " << r.metric << " "
                << r.value << '\n';
    };
  }

 private:
  std::ofstream out_;
};

struct TrainFlags {
  TrainConfig cfg;
  void add(CLI::App* cmd) {
    cmd->add_option("--lr", cfg.lr, "Learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay")
        ->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size)->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs)->capture_default_str();
    cmd->add_option("--patience", cfg.patience, "Epochs without dev improvement")
        ->capture_default_str();
    cmd->add_option("--train-seed", cfg.seed, "Shuffling seed")->capture_default_str();
  }
};

TrainConfig layperson_defaults() {
  TrainConfig c;
  c.batch_size = 16;
  c.patience = 3;
  c.weight_decay = 1e-5;
  c.dev_metric = DevMetric::Csr;
  return c;
}

struct CorpusFlags {
  std::string format = "tsv";
  std::vector<std::string> keep_labels;
  void add(CLI::App* cmd) {
    cmd->add_option("--format", format, "tsv, snli or esnli")->capture_default_str();
    cmd->add_option("--labels", keep_labels, "Keep only these labels, in this order")
        ->delimiter(',');
  }
  CorpusOptions options() const {
    CorpusOptions o;
    o.format = parse_format(format);
    if (!keep_labels.empty()) o.keep_labels = keep_labels;
    return o;
  }
};

struct LoadedClassifier {
  AttentionClassifier model;
  Vocabulary vocab;
  LabelSet labels;
};

LoadedClassifier load_classifier(const fs::path& path) {
  const auto b = load_bundle(path);
  if (!b.config.contains("vocab") || !b.config.contains("labels")) {
    fail(ErrorKind::Format, path.string() + " lacks vocabulary or labels");
  }
  Vocabulary vocab = Vocabulary::from_json(b.config["vocab"]);
  if (vocab.fingerprint() != b.vocab_fingerprint) {
    fail(ErrorKind::Fingerprint, path.string() + ": embedded vocabulary does not match its fingerprint");
  }
  LabelSet labels{b.config["labels"].get<std::vector<std::string>>()};
  return {AttentionClassifier::from_bundle(b), std::move(vocab), std::move(labels)};
}

JointExplainer load_joint(const fs::path& path, const Vocabulary& vocab) {
  const auto b = load_bundle(path, vocab.fingerprint());
  const auto& c = b.config;
  JointExplainer e(JointConfig::from_json(c.at("joint")), parse_task(c.at("task").get<std::string>()),
                   c.at("vocab_size").get<std::size_t>(), c.at("n_classes").get<std::size_t>(),
                   c.at("state_dim").get<std::size_t>(), vocab.stopword_flags());
  e.load(b);
  return e;
}

Corpus corpus_for(const LoadedClassifier& c, const fs::path& train, const fs::path& dev,
                  const fs::path& test, const CorpusOptions& opt) {
  Corpus corpus;
  corpus.task = c.model.config().task;
  corpus.vocab = c.vocab;
  corpus.labels = c.labels;
  corpus.train = load_split(train, opt, c.vocab, c.labels, "train");
  corpus.dev = load_split(dev, opt, c.vocab, c.labels, "dev");
  if (!test.empty()) corpus.test = load_split(test, opt, c.vocab, c.labels, "test");
  return corpus;
}

LaypersonConfig layperson_config(const LoadedClassifier& c, std::size_t hidden, std::size_t emb,
                                 std::uint64_t seed) {
  LaypersonConfig lc;
  lc.task = c.model.config().task;
  lc.vocab_size = c.vocab.size();
  lc.n_classes = c.labels.size();
  lc.hidden_size = hidden;
  lc.embedding_dim = emb;
  lc.seed = seed;
  return lc;
}

// ---------------------------------------------------------------- generate

struct GenerateCmd {
  SyntheticConfig cfg;
  fs::path out;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("generate", "Write a seeded synthetic keyword corpus");
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--n-train", cfg.n_train)->capture_default_str();
    cmd->add_option("--n-dev", cfg.n_dev)->capture_default_str();
    cmd->add_option("--n-test", cfg.n_test)->capture_default_str();
    cmd->add_option("--vocab-size", cfg.vocab_size)->capture_default_str();
    cmd->add_option("--classes", cfg.n_classes)->capture_default_str();
    cmd->add_option("--keywords", cfg.keywords_per_class, "Keywords per class")
        ->capture_default_str();
    cmd->add_option("--noise-len", cfg.noise_len)->capture_default_str();
    cmd->add_option("--seed", cfg.seed)->capture_default_str();
    cmd->callback([this] { run(); });
  }
  void run() {
    const Corpus c = generate_synthetic(cfg);
    make_dir(out);
    write_tsv(out / "train.tsv", c, c.train);
    write_tsv(out / "dev.tsv", c, c.dev);
    write_tsv(out / "test.tsv", c, c.test);
    write_json(out / "config.json",
               {{"command", "generate"}, {"n_train", cfg.n_train}, {"n_dev", cfg.n_dev},
                {"n_test", cfg.n_test}, {"vocab_size", cfg.vocab_size},
                {"classes", cfg.n_classes}, {"keywords", cfg.keywords_per_class},
                {"noise_len", cfg.noise_len}, {"seed", cfg.seed}});
    std::cout << json{{"train", c.train.size()}, {"dev", c.dev.size()}, {"test", c.test.size()},
                      {"vocab", c.vocab.size()}}
                     .dump()
              << '\n';
  }
};

// -------------------------------------------------------- train-classifier

struct TrainClassifierCmd {
  fs::path train, dev, test, embeddings, out;
  CorpusFlags corpus;
  TrainFlags train_flags;
  std::string transform = "softmax";
  std::size_t embedding_dim = 300, hidden = 128;
  bool freeze = false;
  std::uint64_t seed = 1;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-classifier", "Train the attention classifier");
    cmd->add_option("--train", train)->required()->check(CLI::ExistingFile);
    cmd->add_option("--dev", dev)->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test)->check(CLI::ExistingFile);
    cmd->add_option("--embeddings", embeddings, "Pretrained vectors (token v1 ... vd)")
        ->check(CLI::ExistingFile);
    cmd->add_flag("--freeze-embeddings", freeze);
    cmd->add_option("--transform", transform, "softmax, sparsemax or entmax:<alpha>")
        ->capture_default_str();
    cmd->add_option("--embedding-dim", embedding_dim)->capture_default_str();
    cmd->add_option("--hidden", hidden, "LSTM size per direction")->capture_default_str();
    cmd->add_option("--seed", seed, "Initialisation seed")->capture_default_str();
    cmd->add_option("--out", out, "Output directory")->required();
    corpus.add(cmd);
    train_flags.add(cmd);
    cmd->callback([this] { run(); });
  }
  void run() {
    train_flags.cfg.validate();
    const Corpus c = load_corpus(train, dev, test.empty() ? std::nullopt : std::optional(test),
                                 corpus.options());
    ClassifierConfig cc;
    cc.task = c.task;
    cc.vocab_size = c.vocab.size();
    cc.n_classes = c.labels.size();
    cc.embedding_dim = embedding_dim;
    cc.hidden_size = hidden;
    cc.transform = Transform::parse(transform);
    cc.freeze_embeddings = freeze;
    cc.seed = seed;
    std::optional<EmbeddingTable> table;
    if (!embeddings.empty()) {
      table = load_embeddings(embeddings, c.vocab, seed);
      for (const auto& w : table->warnings) std::cerr << "warning: " << w << '\n';
      cc.embedding_dim = table->dimension;
      table->frozen = freeze;
    }
    make_dir(out);
    json config = {{"command", "train-classifier"},
                   {"train", train.string()},
                   {"dev", dev.string()},
                   {"test", test.string()},
                   {"embeddings", embeddings.string()},
                   {"format", corpus.format},
                   {"labels", c.labels.names},
                   {"model", cc.to_json()},
                   {"train_config", train_flags.cfg.to_json()}};
    write_json(out / "config.json", config);

    AttentionClassifier model(cc, table ? &*table : nullptr);
    MetricLog log(out / "metrics.jsonl");
    const auto r = train_classifier(model, c, train_flags.cfg, log.sink("classifier"));
    save_bundle(out / "classifier.ckpt", r.best);
    json result = {{"best_epoch", r.best_epoch}, {"dev_accuracy", r.best.dev_metric}};
    if (!c.test.empty()) result["test_accuracy"] = accuracy(model, c.test);
    write_json(out / "result.json", result);
    std::cout << result.dump() << '\n';
  }
};

// ----------------------------------------------------------------- explain

struct ExplainCmd {
  fs::path classifier, data, joint, out;
  CorpusFlags corpus;
  std::string kind = "topk_attention";
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("explain", "Write an explanation dump for one split");
    cmd->add_option("--classifier", classifier)->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", data)->required()->check(CLI::ExistingFile);
    cmd->add_option("--explainer", kind,
                    "random, erasure, topk_gradient, topk_attention, selective_attention, "
                    "joint or human_highlights")
        ->capture_default_str();
    cmd->add_option("--k", k, "Message size (not for selective attention)");
    cmd->add_option("--seed", seed, "Random explainer seed")->capture_default_str();
    cmd->add_option("--joint", joint, "Joint explainer checkpoint")->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Dump path (.jsonl)")->required();
    corpus.add(cmd);
    cmd->callback([this] { run(); });
  }
  void run() {
    ExplainerConfig ec;
    ec.kind = parse_explainer_kind(kind);
    ec.k = k;
    ec.seed = seed;
    ec.validate();
    const auto c = load_classifier(classifier);
    auto examples = load_split(data, corpus.options(), c.vocab, c.labels, "x");
    std::optional<JointExplainer> je;
    if (ec.kind == ExplainerKind::Joint) {
      if (joint.empty()) fail(ErrorKind::Config, "the joint explainer needs --joint");
      je.emplace(load_joint(joint, c.vocab));
    }
    const bool human = ec.kind == ExplainerKind::HumanHighlights;
    if (human) {
      // Pairs without highlights (neutral in e-SNLI) are left out.
      std::erase_if(examples, [](const Example& x) { return !x.highlights; });
    }
    const auto explainer = make_explainer(ec, &c.model, je ? &*je : nullptr);
    const auto records = explain_split(*explainer, human ? nullptr : &c.model, examples,
                                       c.vocab, c.labels, ec.k);
    if (out.has_parent_path()) make_dir(out.parent_path());
    write_dump(out, records);
    json config = {{"command", "explain"}, {"classifier", classifier.string()},
                   {"data", data.string()}, {"format", corpus.format},
                   {"explainer", ec.to_json()}, {"joint", joint.string()},
                   {"records", records.size()}};
    write_json(fs::path(out.string() + ".config.json"), config);
    std::cout << json{{"records", records.size()}, {"out", out.string()}}.dump() << '\n';
  }
};

// --------------------------------------------------------- train-layperson

struct TrainLaypersonCmd {
  fs::path classifier, train_dump, dev_dump, out;
  TrainFlags train_flags{layperson_defaults()};
  std::size_t hidden = 64, embedding_dim = 64;
  std::uint64_t seed = 1;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-layperson", "Train a bag-of-words layperson on a dump");
    cmd->add_option("--classifier", classifier, "Source of the vocabulary and labels")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--train-dump", train_dump)->required()->check(CLI::ExistingFile);
    cmd->add_option("--dev-dump", dev_dump)->required()->check(CLI::ExistingFile);
    cmd->add_option("--hidden", hidden, "NLI hypothesis encoder size")->capture_default_str();
    cmd->add_option("--embedding-dim", embedding_dim)->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--out", out, "Output directory")->required();
    train_flags.add(cmd);
    cmd->callback([this] { run(); });
  }
  void run() {
    train_flags.cfg.validate();
    const auto c = load_classifier(classifier);
    const auto tr = read_dump(train_dump);
    const auto dv = read_dump(dev_dump);
    BowLayperson l(layperson_config(c, hidden, embedding_dim, seed));
    make_dir(out);
    write_json(out / "config.json", {{"command", "train-layperson"},
                                     {"classifier", classifier.string()},
                                     {"train_dump", train_dump.string()},
                                     {"dev_dump", dev_dump.string()},
                                     {"model", l.config().to_json()},
                                     {"train_config", train_flags.cfg.to_json()}});
    MetricLog log(out / "metrics.jsonl");
    const auto r = train_layperson(l, layperson_items(tr, c.vocab, c.labels),
                                   layperson_items(dv, c.vocab, c.labels), train_flags.cfg,
                                   log.sink("layperson"));
    auto bundle = l.to_bundle(c.vocab, c.labels);
    bundle.dev_metric = r.best.dev_metric;
    save_bundle(out / "layperson.ckpt", bundle);
    const json result = {{"best_epoch", r.best_epoch}, {"dev_csr", r.best.dev_metric}};
    write_json(out / "result.json", result);
    std::cout << result.dump() << '\n';
  }
};

// ---------------------------------------------------------------- evaluate

struct EvaluateCmd {
  std::vector<fs::path> dumps;
  fs::path layperson, out;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "evaluate", "CSR / ACC_L report; fills the layperson column when --layperson is given");
    cmd->add_option("--dump", dumps, "Explanation dumps, one report row each")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--layperson", layperson)->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output directory");
    cmd->callback([this] { run(); });
  }
  void run() {
    std::optional<BowLayperson> l;
    std::optional<Vocabulary> vocab;
    std::optional<LabelSet> labels;
    if (!layperson.empty()) {
      const auto b = load_bundle(layperson);
      vocab = Vocabulary::from_json(b.config.at("vocab"));
      labels = LabelSet{b.config.at("labels").get<std::vector<std::string>>()};
      l.emplace(BowLayperson::from_bundle(b));
    }
    std::vector<RunReport> reports;
    json rows = json::array();
    for (const auto& path : dumps) {
      auto dump = read_dump(path);
      if (dump.empty()) fail(ErrorKind::Data, path.string() + " holds no records");
      LabelSet ls;
      if (labels) {
        ls = *labels;
      } else {
        std::set<std::string> names;
        for (const auto& r : dump) {
          names.insert(r.y);
          names.insert(r.y_hat);
          if (r.y_tilde) names.insert(*r.y_tilde);
        }
        ls.names.assign(names.begin(), names.end());
      }
      const auto records = l ? play(*l, dump, *vocab, ls) : records_from_dump(dump, ls);
      reports.push_back(make_report(dump.front().explainer, "classifier", dump.front().k,
                                    records, ls.size()));
      rows.push_back(reports.back().to_json(ls));
      if (!out.empty() && l) {
        make_dir(out);
        write_dump(out / (path.stem().string() + ".scored.jsonl"), dump);
      }
    }
    const std::string table = format_table(reports);
    std::cout << table;
    if (!out.empty()) {
      make_dir(out);
      write_text(out / "table.txt", table);
      write_json(out / "report.json", rows);
      json config = {{"command", "evaluate"}, {"layperson", layperson.string()}};
      for (const auto& d : dumps) config["dumps"].push_back(d.string());
      write_json(out / "config.json", config);
    }
  }
};

// ------------------------------------------------------------------- sweep

struct SweepCmd {
  fs::path classifier, train, dev, test, joint, out;
  CorpusFlags corpus;
  TrainFlags train_flags{layperson_defaults()};
  std::string kind = "topk_attention";
  std::vector<std::size_t> ks{1, 2, 4, 8};
  bool no_full = false;
  std::uint64_t seed = 0;
  std::size_t hidden = 64, embedding_dim = 64;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("sweep", "CSR as a function of message size k");
    cmd->add_option("--classifier", classifier)->required()->check(CLI::ExistingFile);
    cmd->add_option("--train", train)->required()->check(CLI::ExistingFile);
    cmd->add_option("--dev", dev)->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test)->required()->check(CLI::ExistingFile);
    cmd->add_option("--explainer", kind)->capture_default_str();
    cmd->add_option("--ks", ks, "Ascending values of k")->delimiter(',')->capture_default_str();
    cmd->add_flag("--no-full", no_full, "Skip the full-length point");
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--joint", joint)->check(CLI::ExistingFile);
    cmd->add_option("--hidden", hidden, "NLI layperson encoder size")->capture_default_str();
    cmd->add_option("--embedding-dim", embedding_dim)->capture_default_str();
    cmd->add_option("--out", out)->required();
    corpus.add(cmd);
    train_flags.add(cmd);
    cmd->callback([this] { run(); });
  }
  void run() {
    train_flags.cfg.validate();
    const auto c = load_classifier(classifier);
    const Corpus data = corpus_for(c, train, dev, test, corpus.options());
    SweepConfig sc;
    sc.kind = parse_explainer_kind(kind);
    sc.ks = ks;
    sc.include_full = !no_full;
    sc.seed = seed;
    sc.layperson = layperson_config(c, hidden, embedding_dim, 1);
    sc.train = train_flags.cfg;
    std::optional<JointExplainer> je;
    if (!joint.empty()) je.emplace(load_joint(joint, c.vocab));
    make_dir(out);
    write_json(out / "config.json",
               {{"command", "sweep"}, {"classifier", classifier.string()},
                {"train", train.string()}, {"dev", dev.string()}, {"test", test.string()},
                {"explainer", kind}, {"ks", ks}, {"full", !no_full}, {"seed", seed},
                {"layperson", sc.layperson.to_json()}, {"train_config", sc.train.to_json()}});
    const auto points = k_sweep(c.model, data, sc, je ? &*je : nullptr);
    write_text(out / "curve.csv", sweep_csv(points));
    std::vector<RunReport> reports;
    json rows = json::array();
    for (const auto& p : points) {
      reports.push_back(p.report);
      rows.push_back(p.report.to_json(c.labels));
    }
    write_json(out / "report.json", rows);
    const std::string table = format_table(reports);
    write_text(out / "table.txt", table);
    std::cout << table;
  }
};

// ------------------------------------------------------------------- joint

struct JointCmd {
  fs::path classifier, train, dev, test, out;
  CorpusFlags corpus;
  TrainFlags train_flags{layperson_defaults()};
  JointConfig jc;
  std::size_t hidden = 64, embedding_dim = 64;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("joint", "Train the joint explainer and its layperson");
    cmd->add_option("--classifier", classifier)->required()->check(CLI::ExistingFile);
    cmd->add_option("--train", train)->required()->check(CLI::ExistingFile);
    cmd->add_option("--dev", dev)->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test)->check(CLI::ExistingFile);
    cmd->add_option("--lambda", jc.lambda, "Faithfulness weight")->capture_default_str();
    cmd->add_option("--beta", jc.beta, "Final probability of E seeing the prediction")
        ->capture_default_str();
    cmd->add_option("--k", jc.k, "Test-time message size")->capture_default_str();
    cmd->add_option("--explainer-hidden", jc.hidden_size)->capture_default_str();
    cmd->add_option("--explainer-embedding-dim", jc.embedding_dim)->capture_default_str();
    cmd->add_option("--seed", jc.seed)->capture_default_str();
    cmd->add_option("--hidden", hidden, "NLI layperson encoder size")->capture_default_str();
    cmd->add_option("--embedding-dim", embedding_dim)->capture_default_str();
    cmd->add_option("--out", out)->required();
    corpus.add(cmd);
    train_flags.add(cmd);
    cmd->callback([this] { run(); });
  }
  void run() {
    train_flags.cfg.validate();
    jc = JointConfig::from_json(jc.to_json());
    const auto c = load_classifier(classifier);
    const Corpus data = corpus_for(c, train, dev, test, corpus.options());
    JointExplainer e(jc, data.task, c.vocab.size(), c.labels.size(),
                     2 * c.model.config().hidden_size, c.vocab.stopword_flags());
    BowLayperson l(layperson_config(c, hidden, embedding_dim, jc.seed));
    make_dir(out);
    write_json(out / "config.json",
               {{"command", "joint"}, {"classifier", classifier.string()},
                {"train", train.string()}, {"dev", dev.string()}, {"test", test.string()},
                {"joint", jc.to_json()}, {"layperson", l.config().to_json()},
                {"train_config", train_flags.cfg.to_json()}});
    MetricLog log(out / "metrics.jsonl");
    const auto r = train_joint(e, l, c.model, data, train_flags.cfg, log.sink("joint"));
    auto eb = e.to_bundle();
    eb.vocab_fingerprint = c.vocab.fingerprint();
    eb.dev_metric = r.train.best.dev_metric;
    save_bundle(out / "joint.ckpt", eb);
    save_bundle(out / "layperson.ckpt", l.to_bundle(c.vocab, c.labels));

    json result = {{"best_epoch", r.train.best_epoch}, {"dev_csr", r.train.best.dev_metric},
                   {"classifier_calls", r.classifier_calls}};
    if (!data.test.empty()) {
      ExplainerConfig ec;
      ec.kind = ExplainerKind::Joint;
      ec.k = jc.k;
      const auto ex = make_explainer(ec, &c.model, &e);
      auto dump = explain_split(*ex, &c.model, data.test, c.vocab, c.labels, jc.k);
      const auto records = play(l, dump, c.vocab, c.labels);
      write_dump(out / "test.jsonl", dump);
      result["test"] = make_report("joint", "classifier", jc.k, records, c.labels.size())
                           .to_json(c.labels);
    }
    write_json(out / "result.json", result);
    std::cout << result.dump() << '\n';
  }
};

// ----------------------------------------------------------------- overlap

struct OverlapCmd {
  fs::path a, b;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("overlap", "Mean Jaccard overlap of two aligned dumps");
    cmd->add_option("a", a)->required()->check(CLI::ExistingFile);
    cmd->add_option("b", b)->required()->check(CLI::ExistingFile);
    cmd->callback([this] { run(); });
  }
  void run() {
    const auto da = read_dump(a);
    const auto db = read_dump(b);
    std::cout << json{{"a", a.string()}, {"b", b.string()}, {"overlap", word_overlap(da, db)}}
                     .dump()
              << '\n';
  }
};

// --------------------------------------------------------------- agreement

struct AgreementCmd {
  fs::path a, b;
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("agreement", "Cohen's kappa between two answer logs");
    cmd->add_option("a", a)->required()->check(CLI::ExistingFile);
    cmd->add_option("b", b)->required()->check(CLI::ExistingFile);
    cmd->callback([this] { run(); });
  }
  static std::map<std::string, std::string> read_log(const fs::path& p) {
    std::ifstream in(p);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = json::parse(line);
        out[j.at("item").get<std::string>()] = j.at("label").get<std::string>();
      } catch (const json::exception& e) {
        fail(ErrorKind::Format, p.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    return out;
  }
  void run() {
    const auto la = read_log(a);
    const auto lb = read_log(b);
    std::vector<std::string> xa, xb;
    for (const auto& [item, label] : la) {
      const auto it = lb.find(item);
      if (it == lb.end()) fail(ErrorKind::Alignment, "item " + item + " missing from " + b.string());
      xa.push_back(label);
      xb.push_back(it->second);
    }
    if (la.size() != lb.size()) fail(ErrorKind::Alignment, "logs cover different items");
    std::cout << agreement(xa, xb).to_json().dump() << '\n';
  }
};

// ------------------------------------------------------------------- serve

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

struct ServeCmd {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> sessions;
  std::vector<std::string> labels;
  std::string task = "textclf";
  std::size_t size = 200;
  std::uint64_t seed = 0;
  fs::path log_dir = "sessions";
  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("serve", "HTTP service for human annotation sessions");
    cmd->add_option("--host", host)->capture_default_str();
    cmd->add_option("--port", port)->capture_default_str();
    cmd->add_option("--session", sessions, "id=dump.jsonl, repeatable")->required();
    cmd->add_option("--labels", labels, "Answer choices (default: labels seen in the dumps)")
        ->delimiter(',');
    cmd->add_option("--task", task, "textclf or nli")->capture_default_str();
    cmd->add_option("--size", size, "Items per session")->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_option("--log-dir", log_dir, "Answer logs")->capture_default_str();
    cmd->callback([this] { run(); });
  }
  void run() {
    SessionRegistry registry(log_dir);
    json config = {{"command", "serve"}, {"host", host}, {"port", port}, {"task", task},
                   {"size", size}, {"seed", seed}, {"sessions", sessions}};
    for (const auto& s : sessions) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(ErrorKind::Config, "--session expects id=path, got " + s);
      SessionSpec spec;
      spec.id = s.substr(0, eq);
      spec.task = parse_task(task);
      spec.records = read_dump(s.substr(eq + 1));
      spec.size = size;
      spec.seed = seed;
      if (!spec.records.empty()) spec.explainer = spec.records.front().explainer;
      if (!labels.empty()) {
        spec.labels.names = labels;
      } else if (spec.task == Task::Nli) {
        spec.labels = LabelSet::snli();
      } else {
        std::set<std::string> names;
        for (const auto& r : spec.records) {
          names.insert(r.y);
          names.insert(r.y_hat);
        }
        spec.labels.names.assign(names.begin(), names.end());
      }
      registry.open(spec);
    }
    write_json(log_dir / "config.json", config);
    httplib::Server server;
    install_routes(server, registry);
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cerr << "serving " << sessions.size() << " session(s) on http://" << host << ":" << port
              << '\n';
    if (!server.listen(host, port)) fail(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
  }
};

void print_error(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanations as communication: classifiers, explainers and laypeople"};
  app.require_subcommand(1);
  GenerateCmd generate;
  TrainClassifierCmd train_classifier_cmd;
  ExplainCmd explain;
  TrainLaypersonCmd train_layperson_cmd;
  EvaluateCmd evaluate;
  SweepCmd sweep;
  JointCmd joint;
  OverlapCmd overlap;
  AgreementCmd agreement_cmd;
  ServeCmd serve;
  generate.add(app);
  train_classifier_cmd.add(app);
  explain.add(app);
  train_layperson_cmd.add(app);
  evaluate.add(app);
  sweep.add(app);
  joint.add(app);
  overlap.add(app);
  agreement_cmd.add(app);
  serve.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int code = exit_code(ErrorKind::Config);
    print_error("usage", e.what(), code);
    return code;
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    print_error(to_string(e.kind()), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    print_error("internal", e.what(), 1);
    return 1;
  }
  return 0;
}
