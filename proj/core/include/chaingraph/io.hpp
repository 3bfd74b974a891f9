#pragma once

// Serialization: model JSON, dataset CSV, effect reports, CSV parsing and
// content hashing.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chaingraph/exact.hpp"
#include "chaingraph/model.hpp"

namespace chaingraph {

using Json = nlohmann::ordered_json;

/// Model document: nodes, edges, h, gamma, optional kappa (keyed by label),
/// k keyed by "label1|label2" in lexicographic label order, treatment_mode.
Json model_to_json(const ChainGraphModel& model);
/// Parses without validating parameter invariants; k may then reference
/// non-edges, which validate_model reports.  Throws SchemaError on
/// structurally malformed documents.
ChainGraphModel model_from_json_unchecked(const Json& doc);
/// Parses and throws SchemaError listing every validate_model violation.
ChainGraphModel model_from_json(const Json& doc);

/// First 16 hex digits of SHA-256 over the canonical model JSON.
std::string model_fingerprint(const ChainGraphModel& model);

Json effect_to_json(const EffectEstimate& effect, const std::vector<std::string>& labels);

/// Formats a treatment for reports: "0"/"1" in shared mode, otherwise the
/// comma-separated labels of treated nodes ("none" when empty).
std::string describe_treatment(const TreatmentVector& a,
                               const std::vector<std::string>& labels);
/// Inverse of describe_treatment; also accepts a 0/1 string of length n.
TreatmentVector parse_treatment(std::string_view text, TreatmentMode mode,
                                const std::vector<std::string>& labels);

/// Dataset CSV: case_id, y_<label>..., then `a` (shared) or a_<label>...,
/// then optional c_<label>....
void write_dataset_csv(const CaseDataset& data, std::ostream& out);
CaseDataset read_dataset_csv(std::istream& in);

/// RFC 4180 CSV reader: quoted fields, doubled quotes, embedded newlines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}
  /// False at end of input.
  bool next(std::vector<std::string>& fields);
  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

/// Quotes a field when it contains a delimiter, quote or newline.
std::string csv_escape(std::string_view field);

std::string sha256_hex(std::string_view bytes);
/// Throws IoError when the file cannot be read.
std::string file_sha256(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
/// JSON text with a trailing newline, 2-space indent.
std::string dump_json(const Json& doc);

}  // namespace chaingraph
