#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memroute {

using RecordId = std::uint64_t;

/// One stored conversation turn-pair.
struct MemoryRecord {
  RecordId id = 0;
  std::string user_id;
  std::string session_timestamp;
  std::string question_text;
  std::string answer_text;
  std::string rendered_text;
  std::vector<float> embedding;
  std::string source_model;

  bool operator==(const MemoryRecord&) const = default;
};

struct StoreConfig {
  std::size_t embedding_dim = 768;
  /// Directory holding the store. Empty means in-memory only.
  std::filesystem::path data_path;
};

/// "[<timestamp>] Q: <question> / A: <answer>", byte-exact.
std::string render_turn_pair(std::string_view session_timestamp, std::string_view question,
                             std::string_view answer);

/// Per-user partitioned store of verbatim turn-pairs.
///
/// Layout on disk:
///   <data_path>/store.json                 {"format": "memroute-store", "version": 1, "embedding_dim": D}
///   <data_path>/partitions/<hex(user)>.jsonl  one JSON record per line, append-only
///
/// Every insert is appended and flushed before it becomes visible, so a
/// process that dies after insert() returns keeps the record.
class MemoryStore {
 public:
  /// Opens the store at config.data_path, creating it when the directory is
  /// empty or missing. An existing store with a different dimension is a
  /// ConfigError.
  explicit MemoryStore(StoreConfig config);

  /// Opens an existing store, taking the dimension from its descriptor.
  static std::unique_ptr<MemoryStore> load_snapshot(const std::filesystem::path& path);

  MemoryStore(const MemoryStore&) = delete;
  MemoryStore& operator=(const MemoryStore&) = delete;

  RecordId insert(std::string_view user_id, std::string_view session_timestamp,
                  std::string_view question, std::string_view answer, std::string_view source_model,
                  std::span<const float> embedding);

  /// All records for the partition in insertion order.
  std::vector<MemoryRecord> scan(std::string_view user_id) const;
  std::size_t count(std::string_view user_id) const;
  std::size_t total_count() const;
  std::map<std::string, std::size_t> counts_by_user() const;

  std::size_t embedding_dim() const noexcept { return config_.embedding_dim; }
  const std::filesystem::path& data_path() const noexcept { return config_.data_path; }
  bool persistent() const noexcept { return !config_.data_path.empty(); }

 private:
  void open_or_create();
  void load_partition(const std::filesystem::path& file);
  std::filesystem::path partition_file(std::string_view user_id) const;

  StoreConfig config_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::vector<MemoryRecord>, std::less<>> partitions_;
  RecordId next_id_ = 1;
};

}  // namespace memroute
