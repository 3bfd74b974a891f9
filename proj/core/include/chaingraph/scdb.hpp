#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chaingraph/io.hpp"
#include "chaingraph/model.hpp"

namespace chaingraph {

/// One row of a justice-centered export.
struct RawVoteRecord {
  std::string case_id;
  int term = 0;
  std::string justice_name;
  /// 1 conservative, 2 liberal; other codes and blanks are kept as-is/absent.
  std::optional<int> direction_code;
  std::optional<int> issue_area_code;
};

/// The nine justices in canonical order plus the map from export names
/// (the `justiceName` convention) to panel labels.
struct CourtPanel {
  std::vector<std::string> labels;
  std::map<std::string, std::string> aliases;

  /// Rehnquist, Stevens, O'Connor, Scalia, Kennedy, Souter, Thomas, Ginsburg,
  /// Breyer with the export's justiceName codes as aliases.
  static CourtPanel second_rehnquist();
  void validate() const;
  /// Panel position of an export name or a label.
  std::optional<std::size_t> position(std::string_view name) const;
};

struct TermRange {
  int first = 1994;
  int last = 2004;
};

/// Parses the export; requires the columns caseId, term, justiceName,
/// direction and issueArea (SchemaError lists the missing ones).
std::vector<RawVoteRecord> read_vote_records(std::istream& in);

struct CaseExclusion {
  std::string case_id;
  std::string reason;
};

/// Cases of one panel with all nine votes coded.  The dataset carries
/// shared-mode placeholder treatments (a = 0) until binarize_issue.
struct CourtCases {
  CaseDataset dataset;
  std::vector<int> terms;
  /// 0 when the case has no issue area.
  std::vector<int> issue_codes;
  std::vector<CaseExclusion> exclusions;
  std::size_t records_in_range = 0;
};

/// Groups records by case within the term range, keeps cases where every
/// panel justice has direction 1 or 2 (2 -> +1 liberal, 1 -> -1
/// conservative), and orders cases by case id.  Identical duplicate records
/// collapse; conflicting ones exclude the case.  Unknown justice names in
/// range raise SchemaError; no qualifying case raises EmptyDatasetError.
CourtCases load_cases(const std::vector<RawVoteRecord>& records, const CourtPanel& panel,
                      const TermRange& range);
CourtCases load_cases(std::istream& csv, const CourtPanel& panel, const TermRange& range);

/// Issue-area name for codes 1..14.
std::string_view issue_area_name(int code);
/// Accepts a code ("9"), a name ("Judicial Power") or a slug ("judicial_power").
int issue_area_from_string(std::string_view text);

struct BinarizedIssue {
  CaseDataset dataset;
  std::size_t treated = 0;
  std::optional<std::string> warning;
};

/// Shared-mode treatment a = 1 iff the case's issue area equals target.
/// Throws ConfigError for codes outside 1..14.
BinarizedIssue binarize_issue(const CourtCases& cases, int target_code);

struct JusticeRates {
  std::string label;
  double liberal_rate = 0.0;
  double conservative_rate = 0.0;
};

struct CourtSummary {
  std::size_t cases = 0;
  /// Codes 1..14 (zero counts included) plus code 0 for missing.
  std::map<int, std::size_t> issue_counts;
  std::vector<JusticeRates> justices;
  /// Share of cases with fewer than five liberal votes.
  double conservative_decision_rate = 0.0;
  std::vector<CaseExclusion> exclusions;
  std::size_t records_in_range = 0;
};

CourtSummary summarize(const CourtCases& cases);
/// Includes the reconciliation against an expected case count when given.
Json court_summary_json(const CourtSummary& summary,
                        std::optional<std::size_t> expected_cases = std::nullopt);

/// `case_id,term,issue_area,y_<label>...` round trip of CourtCases.
void write_court_cases_csv(const CourtCases& cases, std::ostream& out);
CourtCases read_court_cases_csv(std::istream& in);

}  // namespace chaingraph
