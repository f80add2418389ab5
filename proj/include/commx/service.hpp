#pragma once

// Annotation sessions for human laypeople and the HTTP service exposing them.
// Answers are appended to one JSON-lines log per session; reopening a
// session replays its log.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "commx/explainers.hpp"
#include "commx/game.hpp"

namespace httplib {
class Server;
}

namespace commx {

struct SessionSpec {
  std::string id;
  Task task = Task::TextClassification;
  std::string explainer;
  std::vector<ExplanationRecord> records;
  LabelSet labels;
  std::size_t size = 200;
  std::uint64_t seed = 0;
};

struct SessionItem {
  std::string item_id;
  std::vector<std::string> tokens;  // shuffled, distinct
  std::string hypothesis;           // NLI only
  std::string y_hat;                // hidden
  std::string y;                    // hidden
};

struct StoredAnswer {
  std::string label;
  bool unsure = false;
  std::string timestamp;
};

class AnnotationSession {
 public:
  // Samples up to `spec.size` records and fixes a per-session item and token
  // order derived from `spec.seed` and the session id. Replays `log` when it
  // exists.
  AnnotationSession(const SessionSpec& spec, std::filesystem::path log);

  const std::string& id() const noexcept { return id_; }
  const std::vector<SessionItem>& items() const noexcept { return items_; }
  bool complete() const noexcept { return answers_.size() == items_.size(); }

  // Items without hidden fields, answered ids and progress.
  nlohmann::json view() const;
  // Conflict once the session is complete or the item was already answered;
  // Validation for an unknown item or label.
  void answer(const std::string& item, const std::string& label, bool unsure);
  // Conflict until every item is answered.
  HumanReport report() const;
  nlohmann::json report_json() const;
  // Labels in item order; Conflict until complete.
  std::map<std::string, std::string> labels_by_item() const;

 private:
  void apply(const std::string& item, const std::string& label, bool unsure,
             std::string timestamp);

  std::string id_;
  Task task_;
  std::string explainer_;
  LabelSet labels_;
  std::vector<SessionItem> items_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, StoredAnswer> answers_;
  std::filesystem::path log_;
  mutable std::mutex mu_;
};

class SessionRegistry {
 public:
  explicit SessionRegistry(std::filesystem::path log_dir);

  AnnotationSession& open(const SessionSpec& spec);
  // Validation error for an unknown id.
  AnnotationSession& get(const std::string& id);
  std::vector<std::string> ids() const;

  // κ between two complete sessions over the same item ids.
  Agreement agreement(const std::string& a, const std::string& b);

 private:
  std::filesystem::path log_dir_;
  std::map<std::string, std::unique_ptr<AnnotationSession>> sessions_;
  mutable std::mutex mu_;
};

// Routes:
//   GET  /sessions
//   GET  /session/{id}
//   POST /session/{id}/answer   {"item", "label", "unsure"}
//   GET  /session/{id}/report
//   GET  /agreement?a={id}&b={id}
// Errors come back as {"error", "message"} with 404 (unknown session),
// 409 (conflict) or 422 (validation).
void install_routes(httplib::Server& server, SessionRegistry& registry);

}  // namespace commx
