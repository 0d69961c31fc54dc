#include "memroute/memory_store.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memroute/errors.hpp"

namespace memroute {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kDescriptorName = "store.json";
constexpr const char* kPartitionDir = "partitions";
constexpr const char* kFormatTag = "memroute-store";
constexpr int kFormatVersion = 1;

std::string hex_encode(std::string_view s) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() * 2);
  for (unsigned char c : s) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xF]);
  }
  return out;
}

json record_to_json(const MemoryRecord& r) {
  return json{{"id", r.id},
              {"user_id", r.user_id},
              {"session_timestamp", r.session_timestamp},
              {"question", r.question_text},
              {"answer", r.answer_text},
              {"rendered_text", r.rendered_text},
              {"source_model", r.source_model},
              {"embedding", r.embedding}};
}

template <typename T>
T require_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return it->get<T>();
}

MemoryRecord record_from_json(const json& j) {
  MemoryRecord r;
  r.id = require_field<RecordId>(j, "id");
  r.user_id = require_field<std::string>(j, "user_id");
  r.session_timestamp = require_field<std::string>(j, "session_timestamp");
  r.question_text = require_field<std::string>(j, "question");
  r.answer_text = require_field<std::string>(j, "answer");
  r.rendered_text = require_field<std::string>(j, "rendered_text");
  r.source_model = require_field<std::string>(j, "source_model");
  r.embedding = require_field<std::vector<float>>(j, "embedding");
  return r;
}

void append_record(const fs::path& file, const std::string& line) {
  std::error_code ec;
  const auto before = fs::exists(file) ? fs::file_size(file, ec) : std::uintmax_t{0};
  bool ok = false;
  {
    std::ofstream out(file, std::ios::binary | std::ios::app);
    out << line << '\n';
    out.flush();
    ok = static_cast<bool>(out);
  }
  if (ok) return;
  // Roll back a partial append so the file stays loadable.
  fs::resize_file(file, before, ec);
  throw StoreError("failed to append record to " + file.string());
}

}  // namespace

std::string render_turn_pair(std::string_view session_timestamp, std::string_view question,
                             std::string_view answer) {
  std::string out;
  out.reserve(session_timestamp.size() + question.size() + answer.size() + 12);
  out += '[';
  out += session_timestamp;
  out += "] Q: ";
  out += question;
  out += " / A: ";
  out += answer;
  return out;
}

MemoryStore::MemoryStore(StoreConfig config) : config_(std::move(config)) {
  if (config_.embedding_dim == 0) throw ConfigError("store.embedding_dim must be positive");
  if (persistent()) open_or_create();
}

std::unique_ptr<MemoryStore> MemoryStore::load_snapshot(const fs::path& path) {
  const fs::path descriptor = path / kDescriptorName;
  std::ifstream in(descriptor);
  if (!in) throw StoreError("cannot open store descriptor " + descriptor.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw StoreError("corrupt store descriptor " + descriptor.string() + ": " + e.what());
  }
  StoreConfig cfg;
  cfg.data_path = path;
  cfg.embedding_dim = j.value("embedding_dim", std::size_t{0});
  return std::make_unique<MemoryStore>(cfg);
}

void MemoryStore::open_or_create() {
  const fs::path& root = config_.data_path;
  std::error_code ec;
  fs::create_directories(root / kPartitionDir, ec);
  if (ec) throw StoreError("cannot create store directory " + root.string() + ": " + ec.message());

  const fs::path descriptor = root / kDescriptorName;
  if (fs::exists(descriptor)) {
    std::ifstream in(descriptor);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw StoreError("corrupt store descriptor " + descriptor.string() + ": " + e.what());
    }
    if (j.value("format", std::string{}) != kFormatTag)
      throw StoreError(descriptor.string() + " is not a memroute store descriptor");
    const auto dim = j.value("embedding_dim", std::size_t{0});
    if (dim != config_.embedding_dim)
      throw ConfigError("store.embedding_dim is " + std::to_string(config_.embedding_dim) +
                        " but the store at " + root.string() + " was created with " +
                        std::to_string(dim));
  } else {
    std::ofstream out(descriptor);
    out << json{{"format", kFormatTag},
                {"version", kFormatVersion},
                {"embedding_dim", config_.embedding_dim}}
               .dump(2)
        << '\n';
    if (!out) throw StoreError("cannot write store descriptor " + descriptor.string());
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root / kPartitionDir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) load_partition(f);
}

void MemoryStore::load_partition(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw StoreError("cannot open partition file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();

  std::vector<MemoryRecord> records;
  std::size_t index = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t eol = content.find('\n', pos);
    const bool terminated = eol != std::string::npos;
    if (!terminated) eol = content.size();
    const std::string_view line(content.data() + pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;

    const std::string where = file.filename().string() + ": record " + std::to_string(index);
    MemoryRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const std::exception& e) {
      throw StoreError(where + (terminated ? " is corrupt: " : " is truncated: ") + e.what(), index);
    }
    if (r.embedding.size() != config_.embedding_dim)
      throw StoreError(where + " has embedding dimension " + std::to_string(r.embedding.size()) +
                           ", store expects " + std::to_string(config_.embedding_dim),
                       index);
    if (r.rendered_text != render_turn_pair(r.session_timestamp, r.question_text, r.answer_text))
      throw StoreError(where + " has rendered_text inconsistent with its fields", index);
    if (file.stem().string() != hex_encode(r.user_id))
      throw StoreError(where + " belongs to user '" + r.user_id + "', not this partition", index);
    next_id_ = std::max(next_id_, r.id + 1);
    records.push_back(std::move(r));
    ++index;
  }
  if (records.empty()) return;
  std::sort(records.begin(), records.end(),
            [](const MemoryRecord& a, const MemoryRecord& b) { return a.id < b.id; });
  std::string user = records.front().user_id;
  partitions_[user] = std::move(records);
}

fs::path MemoryStore::partition_file(std::string_view user_id) const {
  return config_.data_path / kPartitionDir / (hex_encode(user_id) + ".jsonl");
}

RecordId MemoryStore::insert(std::string_view user_id, std::string_view session_timestamp,
                             std::string_view question, std::string_view answer,
                             std::string_view source_model, std::span<const float> embedding) {
  if (embedding.size() != config_.embedding_dim)
    throw DimensionError(config_.embedding_dim, embedding.size());

  MemoryRecord r;
  r.user_id = user_id;
  r.session_timestamp = session_timestamp;
  r.question_text = question;
  r.answer_text = answer;
  r.rendered_text = render_turn_pair(session_timestamp, question, answer);
  r.source_model = source_model;
  r.embedding.assign(embedding.begin(), embedding.end());

  std::unique_lock lock(mutex_);
  r.id = next_id_;

  if (persistent()) append_record(partition_file(user_id), record_to_json(r).dump());
  ++next_id_;
  auto it = partitions_.find(user_id);
  if (it == partitions_.end()) it = partitions_.emplace(std::string(user_id), std::vector<MemoryRecord>{}).first;
  it->second.push_back(std::move(r));
  return it->second.back().id;
}

std::vector<MemoryRecord> MemoryStore::scan(std::string_view user_id) const {
  std::shared_lock lock(mutex_);
  auto it = partitions_.find(user_id);
  if (it == partitions_.end()) return {};
  return it->second;
}

std::size_t MemoryStore::count(std::string_view user_id) const {
  std::shared_lock lock(mutex_);
  auto it = partitions_.find(user_id);
  return it == partitions_.end() ? 0 : it->second.size();
}

std::size_t MemoryStore::total_count() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& [_, recs] : partitions_) n += recs.size();
  return n;
}

std::map<std::string, std::size_t> MemoryStore::counts_by_user() const {
  std::shared_lock lock(mutex_);
  std::map<std::string, std::size_t> out;
  for (const auto& [user, recs] : partitions_) out[user] = recs.size();
  return out;
}

}  // namespace memroute
