#include "chaingraph/scdb.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <ostream>
#include <set>

#include "chaingraph/error.hpp"

namespace chaingraph {

namespace {

constexpr std::array<std::string_view, 14> kIssueNames = {
    "Criminal Procedure", "Civil Rights",     "First Amendment",   "Due Process",
    "Privacy",            "Attorneys",        "Unions",            "Economic Activity",
    "Judicial Power",     "Federalism",       "Interstate Relations", "Federal Taxation",
    "Miscellaneous",      "Private Action"};

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string slug(std::string_view s) {
  std::string out;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::optional<int> parse_optional_int(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty() || s == "NA" || s == "NULL" || s == ".") return std::nullopt;
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw SchemaError("non-integer value \"" + s + "\"");
  }
  if (used != s.size()) throw SchemaError("non-integer value \"" + s + "\"");
  return v;
}

}  // namespace

CourtPanel CourtPanel::second_rehnquist() {
  CourtPanel p;
  p.labels = {"Rehnquist", "Stevens", "O'Connor", "Scalia", "Kennedy",
              "Souter",    "Thomas",  "Ginsburg", "Breyer"};
  p.aliases = {{"WHRehnquist", "Rehnquist"}, {"JPStevens", "Stevens"},
               {"SDOConnor", "O'Connor"},    {"AScalia", "Scalia"},
               {"AMKennedy", "Kennedy"},     {"DHSouter", "Souter"},
               {"CThomas", "Thomas"},        {"RBGinsburg", "Ginsburg"},
               {"SGBreyer", "Breyer"}};
  return p;
}

void CourtPanel::validate() const {
  if (labels.size() != 9) throw ConfigError("a court panel has exactly nine justices");
  std::set<std::string> unique(labels.begin(), labels.end());
  if (unique.size() != labels.size()) throw ConfigError("court panel labels must be unique");
  for (const auto& [name, label] : aliases) {
    if (!unique.contains(label)) {
      throw ConfigError("alias " + name + " points to unknown panel label " + label);
    }
  }
}

std::optional<std::size_t> CourtPanel::position(std::string_view name) const {
  std::string key(name);
  if (auto it = aliases.find(key); it != aliases.end()) key = it->second;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == key) return i;
  }
  return std::nullopt;
}

std::vector<RawVoteRecord> read_vote_records(std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw SchemaError("vote file is empty");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  const std::array<std::string_view, 5> required = {"caseId", "term", "justiceName", "direction",
                                                    "issueArea"};
  std::array<std::size_t, 5> col{};
  std::vector<std::string> missing;
  for (std::size_t r = 0; r < required.size(); ++r) {
    auto it = std::find(header.begin(), header.end(), required[r]);
    if (it == header.end()) {
      missing.emplace_back(required[r]);
    } else {
      col[r] = static_cast<std::size_t>(it - header.begin());
    }
  }
  if (!missing.empty()) {
    std::string msg = "vote file is missing required columns:";
    for (const auto& m : missing) msg += " " + m;
    throw SchemaError(msg);
  }

  std::vector<RawVoteRecord> records;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;
    if (fields.size() != header.size()) {
      throw SchemaError("row near line " + std::to_string(reader.line()) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    try {
      RawVoteRecord rec;
      rec.case_id = trim(fields[col[0]]);
      const auto term = parse_optional_int(fields[col[1]]);
      if (!term) throw SchemaError("missing term");
      rec.term = *term;
      rec.justice_name = trim(fields[col[2]]);
      if (rec.justice_name.empty()) throw SchemaError("empty justiceName");
      if (rec.case_id.empty()) throw SchemaError("empty caseId");
      rec.direction_code = parse_optional_int(fields[col[3]]);
      rec.issue_area_code = parse_optional_int(fields[col[4]]);
      records.push_back(std::move(rec));
    } catch (const SchemaError& e) {
      throw SchemaError(std::string(e.what()) + " near line " + std::to_string(reader.line()));
    }
  }
  return records;
}

CourtCases load_cases(const std::vector<RawVoteRecord>& records, const CourtPanel& panel,
                      const TermRange& range) {
  panel.validate();
  if (range.first > range.last) {
    throw EmptyDatasetError("term range " + std::to_string(range.first) + "-" +
                            std::to_string(range.last) + " is empty");
  }
  struct Pending {
    int term = 0;
    std::vector<std::optional<int>> votes;
    std::vector<bool> seen;
    std::optional<int> issue;
    bool issue_seen = false;
    std::string problem;
  };
  const std::size_t n = panel.labels.size();
  std::map<std::string, Pending> cases;
  CourtCases out{CaseDataset({"_"}, TreatmentMode::shared, false,
                             {CaseDataset::Row{OutcomeVector({1}), TreatmentVector::shared(0), {}}}),
                 {}, {}, {}, 0};
  for (const RawVoteRecord& rec : records) {
    if (rec.term < range.first || rec.term > range.last) continue;
    ++out.records_in_range;
    const auto pos = panel.position(rec.justice_name);
    if (!pos) {
      throw SchemaError("justice name \"" + rec.justice_name + "\" in case " + rec.case_id +
                        " is not on the panel and has no alias");
    }
    Pending& p = cases[rec.case_id];
    if (p.votes.empty()) {
      p.votes.resize(n);
      p.seen.assign(n, false);
      p.term = rec.term;
    }
    if (p.seen[*pos]) {
      if (p.votes[*pos] != rec.direction_code && p.problem.empty()) {
        p.problem = "conflicting duplicate votes for " + panel.labels[*pos];
      }
    } else {
      p.seen[*pos] = true;
      p.votes[*pos] = rec.direction_code;
    }
    if (!p.issue_seen) {
      p.issue = rec.issue_area_code;
      p.issue_seen = true;
    } else if (p.issue != rec.issue_area_code && p.problem.empty()) {
      p.problem = "conflicting issue areas";
    }
  }

  std::vector<CaseDataset::Row> rows;
  std::vector<std::string> ids;
  for (auto& [id, p] : cases) {
    std::string reason = p.problem;
    std::vector<int> y(n, 0);
    for (std::size_t j = 0; j < n && reason.empty(); ++j) {
      if (!p.seen[j] || !p.votes[j]) {
        reason = "missing vote for " + panel.labels[j];
      } else if (*p.votes[j] == 1) {
        y[j] = -1;
      } else if (*p.votes[j] == 2) {
        y[j] = 1;
      } else {
        reason = "direction code " + std::to_string(*p.votes[j]) + " for " + panel.labels[j];
      }
    }
    if (!reason.empty()) {
      out.exclusions.push_back({id, reason});
      continue;
    }
    rows.push_back({OutcomeVector(y), TreatmentVector::shared(0), std::nullopt});
    ids.push_back(id);
    out.terms.push_back(p.term);
    const int issue = p.issue.value_or(0);
    out.issue_codes.push_back(issue >= 1 && issue <= 14 ? issue : 0);
  }
  if (rows.empty()) {
    throw EmptyDatasetError("no case in terms " + std::to_string(range.first) + "-" +
                            std::to_string(range.last) + " has a complete panel vote");
  }
  out.dataset = CaseDataset(panel.labels, TreatmentMode::shared, false, std::move(rows),
                            std::move(ids));
  return out;
}

CourtCases load_cases(std::istream& csv, const CourtPanel& panel, const TermRange& range) {
  return load_cases(read_vote_records(csv), panel, range);
}

std::string_view issue_area_name(int code) {
  if (code < 1 || code > 14) throw ConfigError("issue area code must lie in 1..14");
  return kIssueNames[static_cast<std::size_t>(code - 1)];
}

int issue_area_from_string(std::string_view text) {
  const std::string t = trim(text);
  if (!t.empty() && std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    const int code = std::stoi(t);
    if (code >= 1 && code <= 14) return code;
  }
  const std::string key = slug(t);
  for (int code = 1; code <= 14; ++code) {
    if (slug(kIssueNames[static_cast<std::size_t>(code - 1)]) == key) return code;
  }
  std::string msg = "unknown issue area \"" + t + "\"; valid codes:";
  for (int code = 1; code <= 14; ++code) {
    msg += " " + std::to_string(code) + "=" + slug(kIssueNames[static_cast<std::size_t>(code - 1)]);
  }
  throw ConfigError(msg);
}

BinarizedIssue binarize_issue(const CourtCases& cases, int target_code) {
  if (target_code < 1 || target_code > 14) {
    std::string msg = "unknown issue area code " + std::to_string(target_code) + "; valid codes:";
    for (int code = 1; code <= 14; ++code) msg += " " + std::to_string(code);
    throw ConfigError(msg);
  }
  std::vector<CaseDataset::Row> rows;
  BinarizedIssue out{cases.dataset, 0, std::nullopt};
  rows.reserve(cases.dataset.size());
  for (std::size_t r = 0; r < cases.dataset.size(); ++r) {
    const int a = cases.issue_codes[r] == target_code ? 1 : 0;
    out.treated += static_cast<std::size_t>(a);
    rows.push_back({cases.dataset.rows()[r].y, TreatmentVector::shared(a), std::nullopt});
  }
  out.dataset = CaseDataset(cases.dataset.labels(), TreatmentMode::shared, false, std::move(rows),
                            cases.dataset.case_ids());
  if (out.treated == 0) {
    out.warning = "no case has issue area " + std::string(issue_area_name(target_code));
  }
  return out;
}

CourtSummary summarize(const CourtCases& cases) {
  CourtSummary s;
  const CaseDataset& d = cases.dataset;
  s.cases = d.size();
  for (int code = 0; code <= 14; ++code) s.issue_counts[code] = 0;
  for (int code : cases.issue_codes) ++s.issue_counts[code];
  std::vector<std::size_t> liberal(d.node_count(), 0);
  std::size_t conservative_decisions = 0;
  for (const auto& row : d.rows()) {
    std::size_t lib = 0;
    for (std::size_t j = 0; j < d.node_count(); ++j) {
      if (row.y[j] > 0) {
        ++liberal[j];
        ++lib;
      }
    }
    if (lib < 5) ++conservative_decisions;
  }
  const double total = static_cast<double>(s.cases);
  for (std::size_t j = 0; j < d.node_count(); ++j) {
    const double lr = static_cast<double>(liberal[j]) / total;
    s.justices.push_back({d.labels()[j], lr, 1.0 - lr});
  }
  s.conservative_decision_rate = static_cast<double>(conservative_decisions) / total;
  s.exclusions = cases.exclusions;
  s.records_in_range = cases.records_in_range;
  return s;
}

Json court_summary_json(const CourtSummary& summary, std::optional<std::size_t> expected_cases) {
  Json doc;
  doc["cases"] = summary.cases;
  doc["records_in_range"] = summary.records_in_range;
  Json issues = Json::array();
  for (const auto& [code, count] : summary.issue_counts) {
    if (code == 0) continue;
    issues.push_back({{"code", code}, {"name", issue_area_name(code)}, {"cases", count}});
  }
  doc["issue_counts"] = issues;
  doc["cases_without_issue_area"] = summary.issue_counts.at(0);
  Json justices = Json::array();
  for (const auto& j : summary.justices) {
    justices.push_back({{"justice", j.label},
                        {"liberal_rate", j.liberal_rate},
                        {"conservative_rate", j.conservative_rate}});
  }
  doc["justices"] = justices;
  doc["conservative_decision_rate"] = summary.conservative_decision_rate;
  Json excl = Json::array();
  for (const auto& e : summary.exclusions) excl.push_back({{"case_id", e.case_id}, {"reason", e.reason}});
  doc["excluded_cases"] = summary.exclusions.size();
  doc["exclusions"] = excl;
  if (expected_cases) {
    const auto diff = static_cast<long long>(summary.cases) - static_cast<long long>(*expected_cases);
    doc["reconciliation"] = {{"expected_cases", *expected_cases},
                             {"difference", diff},
                             {"matches", diff == 0}};
  }
  return doc;
}

void write_court_cases_csv(const CourtCases& cases, std::ostream& out) {
  const CaseDataset& d = cases.dataset;
  out << "case_id,term,issue_area";
  for (const auto& l : d.labels()) out << ',' << csv_escape("y_" + l);
  out << '\n';
  for (std::size_t r = 0; r < d.size(); ++r) {
    out << csv_escape(d.case_ids()[r]) << ',' << cases.terms[r] << ',' << cases.issue_codes[r];
    for (std::size_t j = 0; j < d.node_count(); ++j) out << ',' << int{d.rows()[r].y[j]};
    out << '\n';
  }
}

CourtCases read_court_cases_csv(std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header) || header.size() < 4 || header[0] != "case_id" ||
      header[1] != "term" || header[2] != "issue_area") {
    throw SchemaError("court cases CSV must start with case_id,term,issue_area");
  }
  std::vector<std::string> labels;
  for (std::size_t c = 3; c < header.size(); ++c) {
    if (header[c].rfind("y_", 0) != 0) throw SchemaError("unexpected column \"" + header[c] + "\"");
    labels.push_back(header[c].substr(2));
  }
  CourtCases out{CaseDataset({"_"}, TreatmentMode::shared, false,
                             {CaseDataset::Row{OutcomeVector({1}), TreatmentVector::shared(0), {}}}),
                 {}, {}, {}, 0};
  std::vector<CaseDataset::Row> rows;
  std::vector<std::string> ids;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw SchemaError("row near line " + std::to_string(reader.line()) + " has the wrong field count");
    }
    try {
      ids.push_back(fields[0]);
      out.terms.push_back(parse_optional_int(fields[1]).value_or(0));
      out.issue_codes.push_back(parse_optional_int(fields[2]).value_or(0));
      std::vector<int> y;
      for (std::size_t c = 3; c < fields.size(); ++c) {
        y.push_back(parse_optional_int(fields[c]).value_or(0));
      }
      rows.push_back({OutcomeVector(y), TreatmentVector::shared(0), std::nullopt});
    } catch (const ShapeError& e) {
      throw SchemaError(std::string(e.what()) + " near line " + std::to_string(reader.line()));
    }
  }
  out.dataset = CaseDataset(std::move(labels), TreatmentMode::shared, false, std::move(rows),
                            std::move(ids));
  out.records_in_range = out.dataset.size();
  return out;
}

}  // namespace chaingraph
