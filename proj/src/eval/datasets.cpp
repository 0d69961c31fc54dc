#include "memroute/eval/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "memroute/errors.hpp"

namespace memroute::eval {

using json = nlohmann::json;

namespace {

constexpr const char* kMonths[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

json read_json(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DatasetError(std::string(what) + ": cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError(std::string(what) + ": " + path.string() + " is not valid JSON: " + e.what());
  }
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw DatasetError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw DatasetError(where + ": missing field '" + key + "'");
  return *it;
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  throw DatasetError(where + ": field '" + key + "' must be a string");
}

// Answers are sometimes numbers (years, counts).
std::string answer_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string locomo_category(const json& c, const std::string& where) {
  if (c.is_string()) return c.get<std::string>();
  if (!c.is_number_integer()) throw DatasetError(where + ": field 'category' must be an integer or label");
  switch (c.get<int>()) {
    case 1: return "multi-hop";
    case 2: return "temporal";
    case 3: return "open-domain";
    case 4: return "single-hop";
    case 5: return "adversarial";
    default: throw DatasetError(where + ": unknown category " + c.dump());
  }
}

LocomoConversation parse_locomo(const json& j, std::size_t index) {
  const std::string where = "locomo[" + std::to_string(index) + "]";
  LocomoConversation conv;
  conv.sample_id = j.contains("sample_id") ? string_field(j, "sample_id", where) : "conv-" + std::to_string(index);
  const std::string cwhere = where + " (" + conv.sample_id + ")";
  const json& c = field(j, "conversation", cwhere);
  conv.speaker_a = c.value("speaker_a", std::string{});
  conv.speaker_b = c.value("speaker_b", std::string{});

  static const std::regex kSessionKey(R"(^session_(\d+)$)");
  std::vector<std::pair<int, std::string>> keys;
  for (auto it = c.begin(); it != c.end(); ++it) {
    std::smatch m;
    const std::string key = it.key();
    if (std::regex_match(key, m, kSessionKey)) keys.emplace_back(std::stoi(m[1].str()), key);
  }
  std::sort(keys.begin(), keys.end());
  for (const auto& [n, key] : keys) {
    const std::string swhere = cwhere + ".conversation." + key;
    Session s;
    s.session_id = key;
    const std::string date_key = key + "_date_time";
    s.timestamp = render_session_date(string_field(c, date_key.c_str(), cwhere + ".conversation"));
    const json& turns = c.at(key);
    if (!turns.is_array()) throw DatasetError(swhere + ": expected a list of turns");
    for (std::size_t t = 0; t < turns.size(); ++t) {
      const std::string twhere = swhere + "[" + std::to_string(t) + "]";
      s.turns.push_back({string_field(turns[t], "speaker", twhere), string_field(turns[t], "text", twhere)});
    }
    conv.turn_count += s.turns.size();
    conv.sessions.push_back(std::move(s));
  }

  const json& qa = field(j, "qa", cwhere);
  if (!qa.is_array()) throw DatasetError(cwhere + ".qa: expected a list");
  for (std::size_t q = 0; q < qa.size(); ++q) {
    const std::string qwhere = cwhere + ".qa[" + std::to_string(q) + "]";
    const std::string category = locomo_category(field(qa[q], "category", qwhere), qwhere);
    if (category == "adversarial") {
      ++conv.skipped_questions;
      continue;
    }
    QAItem item;
    char id[32];
    std::snprintf(id, sizeof id, "q%03zu", q);
    item.question_id = conv.sample_id + ":" + id;
    item.question = string_field(qa[q], "question", qwhere);
    item.answer = answer_text(field(qa[q], "answer", qwhere));
    item.category = category;
    if (qa[q].contains("evidence") && qa[q]["evidence"].is_array()) {
      // Dialogue ids look like "D3:7": session 3, turn 7.
      static const std::regex kDia(R"(^D(\d+):)");
      for (const auto& e : qa[q]["evidence"]) {
        if (!e.is_string()) continue;
        const std::string s = e.get<std::string>();
        std::smatch m;
        if (std::regex_search(s, m, kDia)) {
          std::string sid = "session_" + m[1].str();
          if (std::find(item.evidence_ids.begin(), item.evidence_ids.end(), sid) == item.evidence_ids.end())
            item.evidence_ids.push_back(std::move(sid));
        }
      }
      item.has_evidence = !item.evidence_ids.empty();
    }
    conv.qa.push_back(std::move(item));
  }
  return conv;
}

}  // namespace

PairingMode parse_pairing_mode(std::string_view s) {
  if (s == "consecutive") return PairingMode::consecutive;
  if (s == "per_turn") return PairingMode::per_turn;
  throw ConfigError("pairing: unknown value '" + std::string(s) + "' (expected consecutive or per_turn)");
}

std::vector<TurnPair> make_turn_pairs(const std::vector<Session>& sessions, PairingMode mode) {
  std::vector<TurnPair> out;
  for (const auto& s : sessions) {
    const auto& t = s.turns;
    if (mode == PairingMode::consecutive) {
      for (std::size_t i = 0; i < t.size(); i += 2)
        out.push_back({s.session_id, s.timestamp, t[i].text, i + 1 < t.size() ? t[i + 1].text : std::string{}});
    } else {
      for (std::size_t i = 0; i < t.size(); ++i)
        out.push_back({s.session_id, s.timestamp, t[i].text, i + 1 < t.size() ? t[i + 1].text : std::string{}});
    }
  }
  return out;
}

std::string render_session_date(std::string_view raw) {
  const std::string s(raw);
  std::smatch m;
  static const std::regex kDayMonthYear(R"((\d{1,2})\s+([A-Za-z]+),?\s+(\d{4}))");
  if (std::regex_search(s, m, kDayMonthYear)) {
    std::string month = m[2].str();
    if (month.size() > 3) month.resize(3);
    if (!month.empty()) month[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(month[0])));
    for (std::size_t i = 1; i < month.size(); ++i)
      month[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(month[i])));
    return std::to_string(std::stoi(m[1].str())) + " " + month + " " + m[3].str();
  }
  static const std::regex kIso(R"((\d{4})[/-](\d{1,2})[/-](\d{1,2}))");
  if (std::regex_search(s, m, kIso)) {
    const int month = std::stoi(m[2].str());
    if (month >= 1 && month <= 12)
      return std::to_string(std::stoi(m[3].str())) + " " + kMonths[month - 1] + " " + m[1].str();
  }
  return s;
}

std::vector<LocomoConversation> load_locomo_all(const std::filesystem::path& path) {
  const json j = read_json(path, "locomo");
  std::vector<LocomoConversation> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_locomo(j[i], i));
  } else {
    out.push_back(parse_locomo(j, 0));
  }
  return out;
}

LocomoConversation load_locomo(const std::filesystem::path& path, std::string_view sample_id) {
  auto all = load_locomo_all(path);
  if (all.empty()) throw DatasetError("locomo: " + path.string() + " contains no conversations");
  if (sample_id.empty()) return std::move(all.front());
  for (auto& c : all)
    if (c.sample_id == sample_id) return std::move(c);
  throw DatasetError("locomo: no conversation with sample_id '" + std::string(sample_id) + "' in " + path.string());
}

std::vector<LongMemEvalItem> load_longmemeval(const std::filesystem::path& path) {
  const json j = read_json(path, "longmemeval");
  if (!j.is_array()) throw DatasetError("longmemeval: expected a list of questions");
  std::vector<LongMemEvalItem> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string where = "longmemeval[" + std::to_string(i) + "]";
    const json& q = j[i];
    LongMemEvalItem item;
    item.qa.question_id = string_field(q, "question_id", where);
    const std::string qwhere = where + " (" + item.qa.question_id + ")";
    item.qa.category = string_field(q, "question_type", qwhere);
    item.qa.question = string_field(q, "question", qwhere);
    item.qa.answer = answer_text(field(q, "answer", qwhere));
    item.question_date = q.contains("question_date") ? string_field(q, "question_date", qwhere) : std::string{};
    if (q.contains("answer_session_ids") && q["answer_session_ids"].is_array()) {
      for (const auto& s : q["answer_session_ids"]) item.qa.evidence_ids.push_back(answer_text(s));
      item.qa.has_evidence = !item.qa.evidence_ids.empty();
    }

    const json& sessions = field(q, "haystack_sessions", qwhere);
    if (!sessions.is_array()) throw DatasetError(qwhere + ": field 'haystack_sessions' must be a list");
    const json* ids = q.contains("haystack_session_ids") ? &q["haystack_session_ids"] : nullptr;
    const json* dates = q.contains("haystack_dates") ? &q["haystack_dates"] : nullptr;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      const std::string swhere = qwhere + ".haystack_sessions[" + std::to_string(s) + "]";
      Session sess;
      sess.session_id = (ids && s < ids->size()) ? answer_text((*ids)[s]) : "session_" + std::to_string(s);
      sess.timestamp = (dates && s < dates->size()) ? render_session_date(answer_text((*dates)[s])) : std::string{};
      if (!sessions[s].is_array()) throw DatasetError(swhere + ": expected a list of turns");
      for (std::size_t t = 0; t < sessions[s].size(); ++t) {
        const std::string twhere = swhere + "[" + std::to_string(t) + "]";
        sess.turns.push_back({string_field(sessions[s][t], "role", twhere),
                              string_field(sessions[s][t], "content", twhere)});
      }
      item.haystack.push_back(std::move(sess));
    }
    out.push_back(std::move(item));
  }
  return out;
}

std::map<std::string, std::size_t> category_histogram(const std::vector<QAItem>& items) {
  std::map<std::string, std::size_t> h;
  for (const auto& i : items) ++h[i.category];
  return h;
}

}  // namespace memroute::eval
