// Copyright 2026 The Privleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "privleak/attack_sim.hpp"
#include "privleak/error.hpp"
#include "privleak/rng.hpp"

namespace privleak {

// Human recognizability annotation: tasks, 5-annotator majority voting,
// dispatch with decoy injection, and a crash-safe JSONL journal.

inline constexpr int kQuorum = 5;
inline constexpr int kMajority = 3;
inline constexpr std::size_t kMaxCandidates = 20;
inline constexpr std::string_view kNoneResponse = "none";

enum class TaskMode { kClassList, kPair };

inline std::string mode_name(TaskMode m) { return m == TaskMode::kPair ? "pair" : "class_list"; }

inline TaskMode parse_mode(const std::string& s) {
  if (s == "pair") return TaskMode::kPair;
  if (s == "class_list") return TaskMode::kClassList;
  fail(ErrorCode::kConfiguration, "unknown task mode '" + s + "'");
}

struct AnnotationTask {
  std::string task_id;
  TaskMode mode = TaskMode::kPair;
  std::string model_id;
  std::string image_id;
  std::string reconstructed_ref;
  std::optional<std::string> original_ref;  // pair mode only
  std::vector<std::string> candidate_classes;  // class_list mode only
  std::string ground_truth;                    // class_list mode only
  bool is_decoy = false;

  void validate() const {
    if (task_id.empty()) fail(ErrorCode::kValidation, "task_id must be non-empty");
    if (mode == TaskMode::kPair && !original_ref) {
      fail(ErrorCode::kValidation, "pair task " + task_id + " needs an original");
    }
    if (mode == TaskMode::kClassList) {
      if (candidate_classes.empty() || candidate_classes.size() > kMaxCandidates) {
        fail(ErrorCode::kValidation, "class_list task " + task_id + " needs 1..20 candidates");
      }
      if (std::find(candidate_classes.begin(), candidate_classes.end(), ground_truth) ==
          candidate_classes.end()) {
        fail(ErrorCode::kValidation, "candidates of " + task_id + " must contain the ground truth");
      }
    }
  }
};

struct Label {
  std::string annotator;
  std::string response;
};

struct AnnotationRecord {
  std::string task_id;
  std::vector<Label> labels;
  std::optional<bool> majority;  // present iff labels.size() == kQuorum

  bool answered_by(const std::string& annotator) const {
    return std::any_of(labels.begin(), labels.end(),
                       [&](const Label& l) { return l.annotator == annotator; });
  }
};

struct HumanScore {
  std::string model_id;
  std::size_t n_items = 0;
  double recognizable_fraction = 0.0;
  // Mean of individual recognizability votes, for comparison with the
  // majority-vote fraction.
  double raw_response_mean = 0.0;
};

// Strict majority over exactly kQuorum binary outcomes.
inline bool majority_vote(std::span<const bool> responses) {
  if (responses.size() != static_cast<std::size_t>(kQuorum)) {
    fail(ErrorCode::kQuorum, "majority vote needs exactly " + std::to_string(kQuorum) +
                                 " responses, got " + std::to_string(responses.size()));
  }
  const auto yes = std::count(responses.begin(), responses.end(), true);
  return yes >= kMajority;
}

// A class_list response counts iff it names the ground truth ("none" never
// does); a pair response counts iff it is "same" on a genuine pair.
inline bool response_recognizable(const AnnotationTask& task, const std::string& response) {
  if (task.mode == TaskMode::kClassList) return response == task.ground_truth;
  return response == "same" && !task.is_decoy;
}

inline void validate_response(const AnnotationTask& task, const std::string& response) {
  if (task.mode == TaskMode::kPair) {
    if (response != "same" && response != "different") {
      fail(ErrorCode::kValidation, "pair response must be 'same' or 'different'");
    }
    return;
  }
  if (response == kNoneResponse) return;
  if (std::find(task.candidate_classes.begin(), task.candidate_classes.end(), response) ==
      task.candidate_classes.end()) {
    fail(ErrorCode::kValidation, "response '" + response + "' is not a candidate class");
  }
}

// Ground truth plus up to 19 distractors drawn from the label set, in
// shuffled order.
inline std::vector<std::string> make_candidates(const std::string& ground_truth,
                                                std::vector<std::string> label_set, Rng& rng) {
  std::sort(label_set.begin(), label_set.end());
  label_set.erase(std::unique(label_set.begin(), label_set.end()), label_set.end());
  std::erase(label_set, ground_truth);
  rng.shuffle(std::span<std::string>(label_set));
  if (label_set.size() > kMaxCandidates - 1) label_set.resize(kMaxCandidates - 1);
  label_set.push_back(ground_truth);
  rng.shuffle(std::span<std::string>(label_set));
  return label_set;
}

// ---------------------------------------------------------------------------
// JSON forms.

inline nlohmann::ordered_json to_json(const AnnotationTask& t) {
  nlohmann::ordered_json j;
  j["task_id"] = t.task_id;
  j["mode"] = mode_name(t.mode);
  j["model_id"] = t.model_id;
  j["image_id"] = t.image_id;
  j["reconstructed_ref"] = t.reconstructed_ref;
  if (t.original_ref) j["original_ref"] = *t.original_ref;
  if (t.mode == TaskMode::kClassList) {
    j["candidate_classes"] = t.candidate_classes;
    j["ground_truth"] = t.ground_truth;
  }
  j["is_decoy"] = t.is_decoy;
  return j;
}

inline AnnotationTask task_from_json(const nlohmann::json& j) {
  AnnotationTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.mode = parse_mode(j.at("mode").get<std::string>());
  t.model_id = j.value("model_id", std::string());
  t.image_id = j.value("image_id", std::string());
  t.reconstructed_ref = j.at("reconstructed_ref").get<std::string>();
  if (j.contains("original_ref")) t.original_ref = j["original_ref"].get<std::string>();
  if (j.contains("candidate_classes")) t.candidate_classes = j["candidate_classes"].get<std::vector<std::string>>();
  t.ground_truth = j.value("ground_truth", std::string());
  t.is_decoy = j.value("is_decoy", false);
  t.validate();
  return t;
}

inline nlohmann::ordered_json to_json(const AnnotationRecord& r) {
  nlohmann::ordered_json labels = nlohmann::ordered_json::array();
  for (const auto& l : r.labels) labels.push_back({{"annotator", l.annotator}, {"response", l.response}});
  nlohmann::ordered_json j;
  j["task_id"] = r.task_id;
  j["labels"] = labels;
  j["majority"] = r.majority ? nlohmann::ordered_json(*r.majority ? 1 : 0) : nlohmann::ordered_json(nullptr);
  return j;
}

struct StoreOptions {
  double decoy_rate = 0.2;
  std::uint64_t seed = 0;
  // When false, only annotators registered explicitly may fetch or submit.
  bool open_registration = true;
};

class AnnotationStore {
 public:
  // In-memory store; nothing is persisted.
  explicit AnnotationStore(StoreOptions options = {}) : options_(options), rng_(options.seed) {
    if (!(options.decoy_rate >= 0.0 && options.decoy_rate < 1.0)) {
      fail(ErrorCode::kConfiguration, "decoy rate must be in [0, 1)");
    }
  }

  // Journal-backed store. An existing journal is replayed and the given
  // tasks are ignored; a new journal is started with one task event per
  // given task.
  static std::unique_ptr<AnnotationStore> open(const std::filesystem::path& journal,
                                               const std::vector<AnnotationTask>& tasks,
                                               StoreOptions options = {}) {
    auto store = std::make_unique<AnnotationStore>(options);
    if (std::filesystem::exists(journal)) {
      store->replay(journal);
      store->attach_journal(journal);
    } else {
      store->attach_journal(journal);
      for (const auto& t : tasks) store->add_task(t);
    }
    return store;
  }

  // Replays a journal without attaching it for writing.
  static std::unique_ptr<AnnotationStore> read_journal(const std::filesystem::path& journal,
                                                       StoreOptions options = {}) {
    auto store = std::make_unique<AnnotationStore>(options);
    store->replay(journal);
    return store;
  }

  // ".json" is read as a snapshot, anything else as a journal.
  static std::unique_ptr<AnnotationStore> read_any(const std::filesystem::path& path,
                                                   StoreOptions options = {}) {
    if (path.extension() == ".json") return load_snapshot(path, options);
    return read_journal(path, options);
  }

  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  ~AnnotationStore() {
    if (journal_) std::fclose(journal_);
  }

  void add_task(const AnnotationTask& task) {
    std::unique_lock lock(mutex_);
    add_task_locked(task, true);
  }

  void register_annotator(const std::string& annotator) {
    std::unique_lock lock(mutex_);
    register_locked(annotator, true);
  }

  bool is_registered(const std::string& annotator) const {
    std::shared_lock lock(mutex_);
    return annotators_.contains(annotator);
  }

  // A genuine, unfrozen task the annotator has not answered, preferring the
  // fewest responses (ties by insertion order). In pair mode the result is
  // replaced by a freshly created decoy with probability decoy_rate.
  std::optional<AnnotationTask> next_task(const std::string& annotator) {
    std::unique_lock lock(mutex_);
    ensure_annotator_locked(annotator);
    const AnnotationTask* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& id : order_) {
      const auto& task = tasks_.at(id);
      if (task.is_decoy) continue;
      const auto& rec = records_.at(id);
      if (rec.majority || rec.answered_by(annotator)) continue;
      if (!best || rec.labels.size() < best_count) {
        best = &task;
        best_count = rec.labels.size();
      }
    }
    if (!best) return std::nullopt;
    if (best->mode == TaskMode::kPair && options_.decoy_rate > 0.0 &&
        rng_.bernoulli(options_.decoy_rate)) {
      if (auto decoy = make_decoy_locked(*best)) return *decoy;
    }
    return *best;
  }

  // Appends the response (durably, when journaled) and freezes the
  // majority on the kQuorum-th response.
  AnnotationRecord submit_label(const std::string& task_id, const std::string& annotator,
                                const std::string& response) {
    std::unique_lock lock(mutex_);
    ensure_annotator_locked(annotator);
    const auto it = tasks_.find(task_id);
    if (it == tasks_.end()) fail(ErrorCode::kNotFound, "unknown task " + task_id);
    const auto& rec = records_.at(task_id);
    if (rec.answered_by(annotator)) {
      fail(ErrorCode::kConflict, annotator + " already answered " + task_id);
    }
    if (rec.labels.size() >= static_cast<std::size_t>(kQuorum)) {
      fail(ErrorCode::kConflict, "task " + task_id + " already has a full quorum");
    }
    validate_response(it->second, response);
    write_event({{"event", "label"}, {"task_id", task_id}, {"annotator", annotator}, {"response", response}});
    return apply_label_locked(task_id, annotator, response);
  }

  AnnotationRecord record(const std::string& task_id) const {
    std::shared_lock lock(mutex_);
    const auto it = records_.find(task_id);
    if (it == records_.end()) fail(ErrorCode::kNotFound, "unknown task " + task_id);
    return it->second;
  }

  AnnotationTask task(const std::string& task_id) const {
    std::shared_lock lock(mutex_);
    const auto it = tasks_.find(task_id);
    if (it == tasks_.end()) fail(ErrorCode::kNotFound, "unknown task " + task_id);
    return it->second;
  }

  std::vector<AnnotationTask> tasks() const {
    std::shared_lock lock(mutex_);
    std::vector<AnnotationTask> out;
    for (const auto& id : order_) out.push_back(tasks_.at(id));
    return out;
  }

  // Decoys never enter the numerator or the denominator.
  HumanScore human_leakage_score(const std::string& model_id) const {
    std::shared_lock lock(mutex_);
    HumanScore score;
    score.model_id = model_id;
    std::vector<std::string> pending;
    std::size_t hits = 0, votes = 0, vote_hits = 0;
    for (const auto& id : order_) {
      const auto& task = tasks_.at(id);
      if (task.is_decoy || task.model_id != model_id) continue;
      const auto& rec = records_.at(id);
      if (!rec.majority) {
        pending.push_back(id);
        continue;
      }
      ++score.n_items;
      hits += *rec.majority ? 1 : 0;
      for (const auto& l : rec.labels) {
        ++votes;
        vote_hits += response_recognizable(task, l.response) ? 1 : 0;
      }
    }
    if (!pending.empty()) {
      std::string msg = "model " + model_id + " has unfrozen tasks:";
      for (const auto& p : pending) msg += " " + p;
      fail(ErrorCode::kIncomplete, msg);
    }
    if (score.n_items == 0) fail(ErrorCode::kNotFound, "no tasks for model " + model_id);
    score.recognizable_fraction = static_cast<double>(hits) / static_cast<double>(score.n_items);
    score.raw_response_mean = static_cast<double>(vote_hits) / static_cast<double>(votes);
    return score;
  }

  std::vector<std::string> model_ids() const {
    std::shared_lock lock(mutex_);
    std::set<std::string> ids;
    for (const auto& [id, t] : tasks_) {
      if (!t.is_decoy) ids.insert(t.model_id);
    }
    return {ids.begin(), ids.end()};
  }

  struct Progress {
    std::size_t total = 0;   // genuine tasks
    std::size_t frozen = 0;
    std::map<std::string, std::size_t> per_annotator;  // responses submitted
    std::size_t decoys = 0;
  };

  Progress progress() const {
    std::shared_lock lock(mutex_);
    Progress p;
    for (const auto& a : annotators_) p.per_annotator[a] = 0;
    for (const auto& id : order_) {
      const auto& task = tasks_.at(id);
      const auto& rec = records_.at(id);
      for (const auto& l : rec.labels) ++p.per_annotator[l.annotator];
      if (task.is_decoy) {
        ++p.decoys;
        continue;
      }
      ++p.total;
      p.frozen += rec.majority ? 1 : 0;
    }
    return p;
  }

  // Fraction of the annotator's decoy responses that correctly said
  // "different"; nullopt when the annotator has seen no decoys.
  std::optional<double> decoy_accuracy(const std::string& annotator) const {
    std::shared_lock lock(mutex_);
    std::size_t seen = 0, correct = 0;
    for (const auto& id : order_) {
      if (!tasks_.at(id).is_decoy) continue;
      for (const auto& l : records_.at(id).labels) {
        if (l.annotator != annotator) continue;
        ++seen;
        correct += l.response == "different" ? 1 : 0;
      }
    }
    if (seen == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(seen);
  }

  // Frozen majorities of genuine tasks as training labels.
  LabelMap majority_labels() const {
    std::shared_lock lock(mutex_);
    LabelMap out;
    for (const auto& id : order_) {
      const auto& task = tasks_.at(id);
      const auto& rec = records_.at(id);
      if (task.is_decoy || !rec.majority) continue;
      out[{task.model_id, task.image_id}] = *rec.majority;
    }
    return out;
  }

  // Full state in insertion order; deterministic text.
  std::string snapshot() const {
    std::shared_lock lock(mutex_);
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["annotators"] = std::vector<std::string>(annotators_.begin(), annotators_.end());
    nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const auto& id : order_) {
      tasks.push_back(to_json(tasks_.at(id)));
      records.push_back(to_json(records_.at(id)));
    }
    j["tasks"] = tasks;
    j["records"] = records;
    return j.dump(1) + "\n";
  }

  void write_snapshot(const std::filesystem::path& path) const {
    const auto tmp = path.string() + ".tmp";
    detail::write_file(tmp, snapshot());
    std::filesystem::rename(tmp, path);
  }

  static std::unique_ptr<AnnotationStore> load_snapshot(const std::filesystem::path& path,
                                                        StoreOptions options = {}) {
    auto store = std::make_unique<AnnotationStore>(options);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, "snapshot: " + std::string(e.what()));
    }
    std::unique_lock lock(store->mutex_);
    for (const auto& a : j.at("annotators")) store->register_locked(a.get<std::string>(), false);
    for (const auto& t : j.at("tasks")) store->add_task_locked(task_from_json(t), false);
    for (const auto& r : j.at("records")) {
      const auto id = r.at("task_id").get<std::string>();
      for (const auto& l : r.at("labels")) {
        store->apply_label_locked(id, l.at("annotator").get<std::string>(), l.at("response").get<std::string>());
      }
    }
    return store;
  }

 private:
  void attach_journal(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    journal_ = std::fopen(path.c_str(), "ab");
    if (!journal_) fail(ErrorCode::kIo, "cannot open journal " + path.string());
  }

  void replay(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot read journal " + path.string());
    std::string line;
    std::size_t lineno = 0;
    std::unique_lock lock(mutex_);
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json ev;
      try {
        ev = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        // A torn final line from a crash is dropped; anything earlier is corrupt.
        if (in.peek() == EOF) break;
        fail(ErrorCode::kFormat, "corrupt journal line " + std::to_string(lineno));
      }
      const auto kind = ev.at("event").get<std::string>();
      if (kind == "task") {
        add_task_locked(task_from_json(ev.at("task")), false);
      } else if (kind == "register") {
        register_locked(ev.at("annotator").get<std::string>(), false);
      } else if (kind == "label") {
        const auto annotator = ev.at("annotator").get<std::string>();
        register_locked(annotator, false);
        apply_label_locked(ev.at("task_id").get<std::string>(), annotator, ev.at("response").get<std::string>());
      } else {
        fail(ErrorCode::kFormat, "unknown journal event '" + kind + "'");
      }
    }
    // Decoy draws continue from a stream derived from the replayed length.
    rng_ = Rng(mix_seed(options_.seed ^ lineno));
  }

  // Durable before returning: flushed and fsync'ed.
  void write_event(const nlohmann::ordered_json& ev) {
    if (!journal_) return;
    const std::string line = ev.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), journal_) != line.size() || std::fflush(journal_) != 0 ||
        ::fsync(::fileno(journal_)) != 0) {
      fail(ErrorCode::kIo, "journal write failed");
    }
  }

  void add_task_locked(const AnnotationTask& task, bool journal) {
    task.validate();
    if (tasks_.contains(task.task_id)) fail(ErrorCode::kConflict, "duplicate task id " + task.task_id);
    if (journal) write_event({{"event", "task"}, {"task", to_json(task)}});
    tasks_.emplace(task.task_id, task);
    records_.emplace(task.task_id, AnnotationRecord{task.task_id, {}, std::nullopt});
    order_.push_back(task.task_id);
    if (!task.is_decoy && task.original_ref) originals_.insert(*task.original_ref);
  }

  void register_locked(const std::string& annotator, bool journal) {
    if (annotator.empty()) fail(ErrorCode::kAuth, "empty annotator id");
    if (annotators_.contains(annotator)) return;
    if (journal) write_event({{"event", "register"}, {"annotator", annotator}});
    annotators_.insert(annotator);
  }

  void ensure_annotator_locked(const std::string& annotator) {
    if (annotators_.contains(annotator)) return;
    if (!options_.open_registration) fail(ErrorCode::kAuth, "unknown annotator '" + annotator + "'");
    register_locked(annotator, true);
  }

  AnnotationRecord apply_label_locked(const std::string& task_id, const std::string& annotator,
                                      const std::string& response) {
    auto& rec = records_.at(task_id);
    if (rec.answered_by(annotator)) fail(ErrorCode::kConflict, "duplicate label in replay for " + task_id);
    if (rec.labels.size() >= static_cast<std::size_t>(kQuorum)) {
      fail(ErrorCode::kConflict, "label beyond quorum for " + task_id);
    }
    rec.labels.push_back({annotator, response});
    if (rec.labels.size() == static_cast<std::size_t>(kQuorum)) {
      const auto& task = tasks_.at(task_id);
      bool flags[kQuorum];
      for (int i = 0; i < kQuorum; ++i) flags[i] = response_recognizable(task, rec.labels[static_cast<std::size_t>(i)].response);
      rec.majority = majority_vote(std::span<const bool>(flags, kQuorum));
    }
    return rec;
  }

  // Same reconstruction shown next to a different original.
  std::optional<AnnotationTask> make_decoy_locked(const AnnotationTask& source) {
    std::vector<std::string> others;
    for (const auto& o : originals_) {
      if (o != source.original_ref) others.push_back(o);
    }
    if (others.empty()) return std::nullopt;
    AnnotationTask decoy = source;
    decoy.is_decoy = true;
    decoy.original_ref = others[rng_.uniform_index(others.size())];
    decoy.task_id = source.task_id + "#decoy" + std::to_string(++decoy_counter_);
    while (tasks_.contains(decoy.task_id)) decoy.task_id = source.task_id + "#decoy" + std::to_string(++decoy_counter_);
    add_task_locked(decoy, true);
    return decoy;
  }

  StoreOptions options_;
  mutable std::shared_mutex mutex_;
  Rng rng_;
  std::FILE* journal_ = nullptr;
  std::map<std::string, AnnotationTask> tasks_;
  std::map<std::string, AnnotationRecord> records_;
  std::vector<std::string> order_;
  std::set<std::string> annotators_;
  std::set<std::string> originals_;
  std::uint64_t decoy_counter_ = 0;
};

// One task per reconstruction of the benchmark. Pair tasks show original
// and reconstruction; class_list tasks need a class per original and draw
// candidates from the set of all classes.
inline std::vector<AnnotationTask> tasks_from_benchmark(
    const Benchmark& bench, TaskMode mode, const std::map<std::string, std::string>& classes = {},
    std::uint64_t seed = 0) {
  std::vector<std::string> label_set;
  for (const auto& [img, cls] : classes) label_set.push_back(cls);
  Rng rng(seed);
  std::vector<AnnotationTask> out;
  for (const auto& [model_id, recs] : bench.models) {
    for (const auto& r : recs) {
      AnnotationTask t;
      t.task_id = model_id + "/" + r.image_id;
      t.mode = mode;
      t.model_id = model_id;
      t.image_id = r.image_id;
      t.reconstructed_ref = model_id + "/" + r.image_id + ".lkm";
      if (mode == TaskMode::kPair) {
        t.original_ref = "originals/" + r.image_id + ".lkm";
      } else {
        const auto it = classes.find(r.image_id);
        if (it == classes.end()) fail(ErrorCode::kConfiguration, "no class for original " + r.image_id);
        t.ground_truth = it->second;
        t.candidate_classes = make_candidates(it->second, label_set, rng);
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace privleak
