#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memroute::eval {

struct QAItem {
  std::string question_id;
  std::string question;
  std::string answer;
  std::string category;
  /// Evidence session ids; empty when the dataset gives none.
  std::vector<std::string> evidence_ids;
  bool has_evidence = false;
};

struct Turn {
  std::string speaker;
  std::string text;
};

struct Session {
  std::string session_id;
  /// "D Mon YYYY" when the source date parses, otherwise the raw date.
  std::string timestamp;
  std::vector<Turn> turns;
};

struct TurnPair {
  std::string session_id;
  std::string timestamp;
  std::string question;
  std::string answer;
};

/// consecutive: turns (0,1), (2,3), ... per session; a trailing odd turn
/// becomes a pair with an empty answer.
/// per_turn: one pair per turn, answered by the following turn of the same
/// session (empty for the session's last turn), so pairs == turns.
enum class PairingMode { consecutive, per_turn };

PairingMode parse_pairing_mode(std::string_view s);
std::vector<TurnPair> make_turn_pairs(const std::vector<Session>& sessions, PairingMode mode);

/// "1:56 pm on 8 May, 2023" -> "8 May 2023"; "2023/05/20 (Sat) 02:21" -> "20 May 2023".
/// Unrecognized dates are returned unchanged.
std::string render_session_date(std::string_view raw);

inline const std::vector<std::string>& locomo_categories() {
  static const std::vector<std::string> k{"single-hop", "multi-hop", "open-domain", "temporal"};
  return k;
}

inline const std::vector<std::string>& longmemeval_types() {
  static const std::vector<std::string> k{"single-session-user", "single-session-assistant",
                                          "single-session-preference", "multi-session",
                                          "temporal-reasoning", "knowledge-update"};
  return k;
}

struct LocomoConversation {
  std::string sample_id;
  std::string speaker_a;
  std::string speaker_b;
  std::vector<Session> sessions;
  std::vector<QAItem> qa;
  std::size_t turn_count = 0;
  /// Adversarial (category 5) questions, which have no gold answer.
  std::size_t skipped_questions = 0;

  std::size_t pair_count(PairingMode mode) const { return make_turn_pairs(sessions, mode).size(); }
};

/// Reads LoCoMo's published JSON (a list of conversations, or one object).
/// Numeric categories map 1 multi-hop, 2 temporal, 3 open-domain,
/// 4 single-hop; category 5 is skipped. Throws DatasetError naming the
/// missing or malformed field.
std::vector<LocomoConversation> load_locomo_all(const std::filesystem::path& path);
/// One conversation by sample_id, or the first when sample_id is empty.
LocomoConversation load_locomo(const std::filesystem::path& path, std::string_view sample_id = {});

struct LongMemEvalItem {
  QAItem qa;
  std::string question_date;
  std::vector<Session> haystack;
};

/// Reads LongMemEval's published JSON list. A missing answer_session_ids
/// leaves has_evidence false.
std::vector<LongMemEvalItem> load_longmemeval(const std::filesystem::path& path);

std::map<std::string, std::size_t> category_histogram(const std::vector<QAItem>& items);

}  // namespace memroute::eval
