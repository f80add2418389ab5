#include "commx/service.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <set>

#include <httplib.h>

#include "commx/error.hpp"
#include "commx/hash.hpp"

namespace commx {

namespace {

std::uint64_t session_seed(std::uint64_t seed, const std::string& id) {
  Fnv1a h;
  h.update(&seed, sizeof seed);
  h.update(id);
  return h.value();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

AnnotationSession::AnnotationSession(const SessionSpec& spec, std::filesystem::path log)
    : id_(spec.id),
      task_(spec.task),
      explainer_(spec.explainer),
      labels_(spec.labels),
      log_(std::move(log)) {
  if (id_.empty() || id_.find_first_of("/\\ ") != std::string::npos) {
    fail(ErrorKind::Config, "session id must be non-empty without slashes or spaces");
  }
  if (spec.size == 0) fail(ErrorKind::Config, "session size must be positive");
  if (spec.records.empty()) fail(ErrorKind::Data, "session " + id_ + " has no records");
  if (labels_.names.empty()) fail(ErrorKind::Config, "session " + id_ + " has no labels");

  Rng rng(session_seed(spec.seed, id_));
  std::vector<std::size_t> order(spec.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(order.size(), spec.size));
  for (auto i : order) {
    const auto& r = spec.records[i];
    if (index_.count(r.example_id)) {
      fail(ErrorKind::Data, "duplicate example id in session input: " + r.example_id);
    }
    labels_.index(r.y_hat);
    labels_.index(r.y);
    SessionItem item;
    item.item_id = r.example_id;
    const std::set<std::string> distinct(r.message_tokens.begin(), r.message_tokens.end());
    item.tokens.assign(distinct.begin(), distinct.end());
    std::shuffle(item.tokens.begin(), item.tokens.end(), rng);
    if (task_ == Task::Nli) item.hypothesis = join(r.hypothesis_tokens);
    item.y_hat = r.y_hat;
    item.y = r.y;
    index_[item.item_id] = items_.size();
    items_.push_back(std::move(item));
  }

  std::ifstream in(log_);
  std::string line;
  std::size_t lineno = 0;
  while (in && std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.at("session").get<std::string>() != id_) continue;
      apply(j.at("item").get<std::string>(), j.at("label").get<std::string>(),
            j.at("unsure").get<bool>(), j.at("ts").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, log_.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), log_.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void AnnotationSession::apply(const std::string& item, const std::string& label,
                              bool unsure, std::string timestamp) {
  if (!index_.count(item)) fail(ErrorKind::Validation, "unknown item: " + item);
  if (std::find(labels_.names.begin(), labels_.names.end(), label) == labels_.names.end()) {
    fail(ErrorKind::Validation, "unknown label: " + label);
  }
  if (complete()) fail(ErrorKind::Conflict, "session " + id_ + " is closed");
  if (answers_.count(item)) fail(ErrorKind::Conflict, "item " + item + " was already answered");
  answers_[item] = {label, unsure, std::move(timestamp)};
}

nlohmann::json AnnotationSession::view() const {
  std::lock_guard lock(mu_);
  nlohmann::json items = nlohmann::json::array();
  nlohmann::json answered = nlohmann::json::array();
  std::optional<std::size_t> next;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& it = items_[i];
    nlohmann::json j = {{"item", it.item_id}, {"tokens", it.tokens}};
    if (task_ == Task::Nli) j["hypothesis"] = it.hypothesis;
    items.push_back(std::move(j));
    if (answers_.count(it.item_id)) {
      answered.push_back(it.item_id);
    } else if (!next) {
      next = i;
    }
  }
  nlohmann::json out = {{"session", id_},
                        {"task", to_string(task_)},
                        {"labels", labels_.names},
                        {"items", std::move(items)},
                        {"answered", std::move(answered)},
                        {"complete", answers_.size() == items_.size()}};
  out["next"] = next ? nlohmann::json(*next) : nlohmann::json(nullptr);
  return out;
}

void AnnotationSession::answer(const std::string& item, const std::string& label,
                               bool unsure) {
  std::lock_guard lock(mu_);
  const std::string ts = utc_now();
  apply(item, label, unsure, ts);
  const nlohmann::json line = {
      {"session", id_}, {"item", item}, {"label", label}, {"unsure", unsure}, {"ts", ts}};
  std::ofstream out(log_, std::ios::app);
  out << line.dump() << '\n';
  out.flush();
  if (!out) {
    answers_.erase(item);
    fail(ErrorKind::Io, "cannot append to " + log_.string());
  }
}

HumanReport AnnotationSession::report() const {
  std::lock_guard lock(mu_);
  if (answers_.size() != items_.size()) {
    fail(ErrorKind::Conflict, "session " + id_ + " has " +
                                  std::to_string(items_.size() - answers_.size()) +
                                  " unanswered items");
  }
  std::vector<HumanAnswer> answers;
  std::vector<std::string> y_hat, y;
  for (const auto& it : items_) {
    const auto& a = answers_.at(it.item_id);
    answers.push_back({a.label, a.unsure});
    y_hat.push_back(it.y_hat);
    y.push_back(it.y);
  }
  return human_report(answers, y_hat, y);
}

nlohmann::json AnnotationSession::report_json() const {
  nlohmann::json j = report().to_json();
  j["session"] = id_;
  j["explainer"] = explainer_;
  return j;
}

std::map<std::string, std::string> AnnotationSession::labels_by_item() const {
  std::lock_guard lock(mu_);
  if (answers_.size() != items_.size()) {
    fail(ErrorKind::Conflict, "session " + id_ + " is not complete");
  }
  std::map<std::string, std::string> out;
  for (const auto& [item, a] : answers_) out[item] = a.label;
  return out;
}

SessionRegistry::SessionRegistry(std::filesystem::path log_dir)
    : log_dir_(std::move(log_dir)) {
  std::error_code ec;
  std::filesystem::create_directories(log_dir_, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + log_dir_.string() + ": " + ec.message());
}

AnnotationSession& SessionRegistry::open(const SessionSpec& spec) {
  std::lock_guard lock(mu_);
  if (sessions_.count(spec.id)) fail(ErrorKind::Config, "session opened twice: " + spec.id);
  auto s = std::make_unique<AnnotationSession>(spec, log_dir_ / (spec.id + ".jsonl"));
  auto& ref = *s;
  sessions_[spec.id] = std::move(s);
  return ref;
}

AnnotationSession& SessionRegistry::get(const std::string& id) {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorKind::Validation, "unknown session: " + id);
  return *it->second;
}

std::vector<std::string> SessionRegistry::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

Agreement SessionRegistry::agreement(const std::string& a, const std::string& b) {
  const auto la = get(a).labels_by_item();
  const auto lb = get(b).labels_by_item();
  std::vector<std::string> xa, xb;
  for (const auto& [item, label] : la) {
    const auto it = lb.find(item);
    if (it == lb.end()) {
      fail(ErrorKind::Alignment, "sessions " + a + " and " + b + " cover different items");
    }
    xa.push_back(label);
    xb.push_back(it->second);
  }
  if (la.size() != lb.size()) {
    fail(ErrorKind::Alignment, "sessions " + a + " and " + b + " cover different items");
  }
  return commx::agreement(xa, xb);
}

namespace {

constexpr const char* kJson = "application/json";

void send_error(httplib::Response& res, int status, const std::string& kind,
                const std::string& message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", kind}, {"message", message}}.dump(), kJson);
}

template <typename F>
void guarded(httplib::Response& res, SessionRegistry& registry, const std::string& id, F&& f) {
  try {
    if (!id.empty()) {
      const auto ids = registry.ids();
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        send_error(res, 404, "not_found", "unknown session: " + id);
        return;
      }
    }
    res.set_content(f().dump(), kJson);
  } catch (const Error& e) {
    int status = 500;
    switch (e.kind()) {
      case ErrorKind::Conflict: status = 409; break;
      case ErrorKind::Validation:
      case ErrorKind::Alignment:
      case ErrorKind::Metric: status = 422; break;
      default: break;
    }
    send_error(res, status, to_string(e.kind()), e.what());
  }
}

}  // namespace

void install_routes(httplib::Server& server, SessionRegistry& registry) {
  server.Get("/sessions", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, registry, "", [&] { return nlohmann::json{{"sessions", registry.ids()}}; });
  });
  server.Get(R"(/session/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    guarded(res, registry, id, [&] { return registry.get(id).view(); });
  });
  server.Post(R"(/session/([^/]+)/answer)",
              [&](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                guarded(res, registry, id, [&] {
                  nlohmann::json body;
                  std::string item, label;
                  bool unsure = false;
                  try {
                    body = nlohmann::json::parse(req.body);
                    item = body.at("item").get<std::string>();
                    label = body.at("label").get<std::string>();
                    unsure = body.value("unsure", false);
                  } catch (const nlohmann::json::exception& e) {
                    fail(ErrorKind::Validation, std::string("bad answer body: ") + e.what());
                  }
                  auto& s = registry.get(id);
                  s.answer(item, label, unsure);
                  const auto v = s.view();
                  return nlohmann::json{{"session", id},
                                        {"item", item},
                                        {"answered", v["answered"].size()},
                                        {"remaining", v["items"].size() - v["answered"].size()},
                                        {"complete", v["complete"]}};
                });
              });
  server.Get(R"(/session/([^/]+)/report)",
             [&](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               guarded(res, registry, id, [&] { return registry.get(id).report_json(); });
             });
  server.Get("/agreement", [&](const httplib::Request& req, httplib::Response& res) {
    const std::string a = req.get_param_value("a");
    const std::string b = req.get_param_value("b");
    guarded(res, registry, "", [&] {
      if (a.empty() || b.empty()) fail(ErrorKind::Validation, "agreement needs ?a=&b=");
      for (const auto& id : {a, b}) {
        const auto ids = registry.ids();
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
          fail(ErrorKind::Validation, "unknown session: " + id);
        }
      }
      auto j = registry.agreement(a, b).to_json();
      j["a"] = a;
      j["b"] = b;
      return j;
    });
  });
}

}  // namespace commx
