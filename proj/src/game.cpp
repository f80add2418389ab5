#include "commx/game.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "commx/error.hpp"

namespace commx {

namespace {

double fraction(std::span<const CommunicationRecord> records,
                std::size_t CommunicationRecord::*reference) {
  if (records.empty()) fail(ErrorKind::Metric, "metric over an empty record list");
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.y_tilde == r.*reference;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace

double csr(std::span<const CommunicationRecord> records) {
  return fraction(records, &CommunicationRecord::y_hat);
}

double acc(std::span<const CommunicationRecord> records) {
  return fraction(records, &CommunicationRecord::y);
}

nlohmann::json RunReport::to_json(const LabelSet& labels) const {
  nlohmann::json j = {{"explainer", explainer}, {"classifier", classifier},
                      {"n", n},                 {"csr", csr},
                      {"acc", acc},             {"mean_k", mean_k},
                      {"labels", labels.names}, {"confusion", confusion}};
  j["k"] = k ? nlohmann::json(*k) : nlohmann::json(nullptr);
  j["entropy"] = entropy ? nlohmann::json(*entropy) : nlohmann::json(nullptr);
  return j;
}

RunReport make_report(std::string explainer, std::string classifier,
                      std::optional<std::size_t> k,
                      std::span<const CommunicationRecord> records,
                      std::size_t n_classes) {
  RunReport r;
  r.explainer = std::move(explainer);
  r.classifier = std::move(classifier);
  r.k = k;
  r.n = records.size();
  r.csr = csr(records);
  r.acc = acc(records);
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::vector<std::vector<std::string>> messages;
  double size = 0.0;
  for (const auto& rec : records) {
    if (rec.y_hat >= n_classes || rec.y_tilde >= n_classes) {
      fail(ErrorKind::Label, "record " + rec.example_id + " has a label outside the class set");
    }
    ++r.confusion[rec.y_hat][rec.y_tilde];
    size += static_cast<double>(rec.message_size);
    messages.push_back(rec.message);
  }
  r.mean_k = size / static_cast<double>(records.size());
  try {
    r.entropy = explanation_entropy(messages);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Metric) throw;
  }
  return r;
}

std::vector<CommunicationRecord> records_from_dump(
    std::span<const ExplanationRecord> dump, const LabelSet& labels) {
  std::vector<CommunicationRecord> out;
  out.reserve(dump.size());
  for (const auto& d : dump) {
    if (!d.y_tilde) fail(ErrorKind::Data, "record " + d.example_id + " has no layperson label");
    CommunicationRecord r;
    r.example_id = d.example_id;
    r.y = labels.index(d.y);
    r.y_hat = labels.index(d.y_hat);
    r.y_tilde = labels.index(*d.y_tilde);
    const std::set<std::string> set(d.message_tokens.begin(), d.message_tokens.end());
    r.message.assign(set.begin(), set.end());
    r.message_size = r.message.size();
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CommunicationRecord> play(const BowLayperson& layperson,
                                      std::span<ExplanationRecord> dump,
                                      const Vocabulary& vocab,
                                      const LabelSet& labels) {
  const auto items = layperson_items(dump, vocab, labels);
  for (std::size_t i = 0; i < dump.size(); ++i) {
    dump[i].y_tilde = labels.names.at(layperson.predict(items[i].message, items[i].hypothesis));
  }
  return records_from_dump(dump, labels);
}

std::string format_table(std::span<const RunReport> reports) {
  std::size_t width = std::string("Explainer").size();
  for (const auto& r : reports) width = std::max(width, r.explainer.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "Explainer" << std::right
      << std::setw(8) << "k" << std::setw(9) << "CSR" << std::setw(9) << "ACC_L"
      << std::setw(8) << "H" << '\n';
  out << std::string(width + 34, '-') << '\n';
  for (const auto& r : reports) {
    std::ostringstream k;
    if (r.k) {
      k << *r.k;
    } else {
      k << std::fixed << std::setprecision(2) << r.mean_k;
    }
    out << std::left << std::setw(static_cast<int>(width)) << r.explainer << std::right
        << std::setw(8) << k.str() << std::fixed << std::setprecision(2) << std::setw(9)
        << 100.0 * r.csr << std::setw(9) << 100.0 * r.acc << std::setw(8);
    if (r.entropy) {
      out << *r.entropy;
    } else {
      out << "-";
    }
    out << '\n';
  }
  return out.str();
}

double explanation_entropy(std::span<const std::vector<std::string>> messages,
                           double base) {
  if (!(base > 1.0)) fail(ErrorKind::Config, "entropy base must exceed 1");
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& m : messages) {
    for (const auto& w : m) {
      ++counts[w];
      ++total;
    }
  }
  if (total == 0) fail(ErrorKind::Metric, "entropy of empty messages is undefined");
  double h = 0.0;
  for (const auto& [w, c] : counts) {
    const double f = static_cast<double>(c) / static_cast<double>(total);
    h -= f * std::log(f);
  }
  return h / std::log(base);
}

double jaccard(std::span<const std::string> a, std::span<const std::string> b) {
  const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : sa) inter += sb.count(w);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

double word_overlap(std::span<const ExplanationRecord> a,
                    std::span<const ExplanationRecord> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::Alignment, "dumps hold " + std::to_string(a.size()) + " and " +
                                   std::to_string(b.size()) + " records");
  }
  if (a.empty()) fail(ErrorKind::Metric, "overlap of empty dumps is undefined");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].example_id != b[i].example_id) {
      fail(ErrorKind::Alignment, "record " + std::to_string(i) + ": " + a[i].example_id +
                                     " vs " + b[i].example_id);
    }
    total += jaccard(a[i].message_tokens, b[i].message_tokens);
  }
  return total / static_cast<double>(a.size());
}

nlohmann::json Agreement::to_json() const {
  return {{"p_o", p_o}, {"p_e", p_e}, {"kappa", kappa}, {"degenerate", degenerate}};
}

Agreement agreement(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::Alignment, "annotations have " + std::to_string(a.size()) + " and " +
                                   std::to_string(b.size()) + " labels");
  }
  if (a.empty()) fail(ErrorKind::Metric, "agreement over no items is undefined");
  const double n = static_cast<double>(a.size());
  std::map<std::string, std::pair<std::size_t, std::size_t>> marginals;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same += a[i] == b[i];
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
  }
  Agreement r;
  r.p_o = static_cast<double>(same) / n;
  for (const auto& [label, m] : marginals) {
    r.p_e += (static_cast<double>(m.first) / n) * (static_cast<double>(m.second) / n);
  }
  if (marginals.size() == 1) {
    r.p_e = 1.0;
    r.kappa = 1.0;
    r.degenerate = true;
  } else {
    r.kappa = (r.p_o - r.p_e) / (1.0 - r.p_e);
  }
  return r;
}

nlohmann::json HumanReport::to_json() const {
  nlohmann::json j = {{"n", n}, {"n_unsure", n_unsure}, {"csr", csr}, {"acc", acc},
                      {"unsure_fraction", unsure_fraction}};
  j["csr_excluding_unsure"] = csr_sure ? nlohmann::json(*csr_sure) : nlohmann::json(nullptr);
  j["acc_excluding_unsure"] = acc_sure ? nlohmann::json(*acc_sure) : nlohmann::json(nullptr);
  return j;
}

HumanReport human_report(std::span<const HumanAnswer> answers,
                         std::span<const std::string> y_hat,
                         std::span<const std::string> y) {
  if (answers.size() != y_hat.size() || answers.size() != y.size()) {
    fail(ErrorKind::Alignment, "answers and hidden labels differ in length");
  }
  if (answers.empty()) fail(ErrorKind::Metric, "report over no answers is undefined");
  HumanReport r;
  r.n = answers.size();
  std::size_t c_all = 0, a_all = 0, c_sure = 0, a_sure = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const bool c = answers[i].label == y_hat[i];
    const bool a = answers[i].label == y[i];
    c_all += c;
    a_all += a;
    if (answers[i].unsure) {
      ++r.n_unsure;
    } else {
      c_sure += c;
      a_sure += a;
    }
  }
  const double n = static_cast<double>(r.n);
  r.csr = static_cast<double>(c_all) / n;
  r.acc = static_cast<double>(a_all) / n;
  r.unsure_fraction = static_cast<double>(r.n_unsure) / n;
  if (r.n_unsure < r.n) {
    const double s = static_cast<double>(r.n - r.n_unsure);
    r.csr_sure = static_cast<double>(c_sure) / s;
    r.acc_sure = static_cast<double>(a_sure) / s;
  }
  return r;
}

std::vector<SweepPoint> k_sweep(const AttentionClassifier& classifier,
                                const Corpus& corpus, const SweepConfig& config,
                                const JointExplainer* joint) {
  if (!std::is_sorted(config.ks.begin(), config.ks.end())) {
    fail(ErrorKind::Config, "sweep values of k must be ascending");
  }
  if (config.kind == ExplainerKind::Selective ||
      config.kind == ExplainerKind::HumanHighlights) {
    fail(ErrorKind::Config, to_string(config.kind) + " has no k to sweep");
  }
  if (corpus.dev.empty() || corpus.test.empty()) {
    fail(ErrorKind::Data, "a sweep needs dev and test splits");
  }
  std::vector<std::optional<std::size_t>> cells(config.ks.begin(), config.ks.end());
  if (config.include_full) cells.push_back(std::nullopt);

  std::vector<SweepPoint> out;
  for (const auto& k : cells) {
    const std::string tag = k ? "k=" + std::to_string(*k) : std::string("k=full");
    try {
      ExplainerConfig ec;
      ec.kind = config.kind;
      ec.seed = config.seed;
      ec.k = k.value_or(std::numeric_limits<std::size_t>::max());
      const auto explainer = make_explainer(ec, &classifier, joint);
      auto dump = [&](std::span<const Example> split) {
        return explain_split(*explainer, &classifier, split, corpus.vocab, corpus.labels, k);
      };
      const auto train = dump(corpus.train);
      const auto dev = dump(corpus.dev);
      auto test = dump(corpus.test);
      BowLayperson l(config.layperson);
      train_layperson(l, layperson_items(train, corpus.vocab, corpus.labels),
                      layperson_items(dev, corpus.vocab, corpus.labels), config.train);
      const auto records = play(l, test, corpus.vocab, corpus.labels);
      out.push_back({k, make_report(explainer->name(), "classifier", k, records,
                                    corpus.labels.size())});
    } catch (const Error& e) {
      throw Error(e.kind(), tag + ": " + e.what());
    }
  }
  return out;
}

std::string sweep_csv(std::span<const SweepPoint> points) {
  std::ostringstream out;
  out << "k,csr,acc,mean_k\n";
  out << std::setprecision(10);
  for (const auto& p : points) {
    out << (p.k ? std::to_string(*p.k) : std::string("full")) << ',' << p.report.csr << ','
        << p.report.acc << ',' << p.report.mean_k << '\n';
  }
  return out.str();
}

}  // namespace commx
