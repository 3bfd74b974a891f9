#include "chaingraph/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "chaingraph/error.hpp"

namespace chaingraph {

namespace {

std::string edge_key(const NetworkGraph& g, const Edge& e) {
  std::string a = g.label(e.u);
  std::string b = g.label(e.v);
  if (b < a) std::swap(a, b);
  return a + "|" + b;
}

std::vector<double> keyed_values(const Json& doc, std::string_view field,
                                 const std::vector<std::string>& labels) {
  if (!doc.contains(field)) throw SchemaError("model JSON missing field \"" + std::string(field) + "\"");
  const Json& obj = doc.at(std::string(field));
  if (!obj.is_object()) throw SchemaError("field \"" + std::string(field) + "\" must be an object keyed by node label");
  std::vector<double> out(labels.size(), 0.0);
  std::vector<bool> seen(labels.size(), false);
  for (const auto& [key, value] : obj.items()) {
    auto it = std::find(labels.begin(), labels.end(), key);
    if (it == labels.end()) {
      throw SchemaError("field \"" + std::string(field) + "\" has unknown node \"" + key + "\"");
    }
    if (!value.is_number()) throw SchemaError("field \"" + std::string(field) + "\" entries must be numbers");
    const auto i = static_cast<std::size_t>(it - labels.begin());
    out[i] = value.get<double>();
    seen[i] = true;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!seen[i]) {
      throw SchemaError("field \"" + std::string(field) + "\" missing node \"" + labels[i] + "\"");
    }
  }
  return out;
}

std::vector<std::string> split_labels(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    std::string item(text.substr(start, comma == std::string_view::npos
                                            ? std::string_view::npos
                                            : comma - start));
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model JSON

Json model_to_json(const ChainGraphModel& model) {
  const auto& g = model.graph;
  Json doc;
  doc["nodes"] = g.labels();
  Json edges = Json::array();
  for (const Edge& e : g.edges()) edges.push_back({g.label(e.u), g.label(e.v)});
  doc["edges"] = std::move(edges);
  doc["treatment_mode"] = std::string(to_string(model.treatment_mode));
  Json h = Json::object();
  Json gamma = Json::object();
  for (std::size_t i = 0; i < g.size(); ++i) {
    h[g.label(i)] = model.h.at(i);
    gamma[g.label(i)] = model.gamma.at(i);
  }
  doc["h"] = std::move(h);
  doc["gamma"] = std::move(gamma);
  if (model.kappa) {
    Json kappa = Json::object();
    for (std::size_t i = 0; i < g.size(); ++i) kappa[g.label(i)] = model.kappa->at(i);
    doc["kappa"] = std::move(kappa);
  }
  std::map<std::string, double> k_sorted;
  for (const auto& [e, value] : model.k) k_sorted[edge_key(g, e)] = value;
  Json k = Json::object();
  for (const auto& [key, value] : k_sorted) k[key] = value;
  doc["k"] = std::move(k);
  return doc;
}

ChainGraphModel model_from_json_unchecked(const Json& doc) {
  if (!doc.is_object()) throw SchemaError("model JSON must be an object");
  for (const char* field : {"nodes", "edges", "h", "gamma", "k", "treatment_mode"}) {
    if (!doc.contains(field)) throw SchemaError(std::string("model JSON missing field \"") + field + "\"");
  }
  std::vector<std::string> labels;
  try {
    labels = doc.at("nodes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("\"nodes\" must be an array of strings");
  }
  std::vector<std::pair<std::string, std::string>> edge_labels;
  for (const auto& e : doc.at("edges")) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
      throw SchemaError("each edge must be a 2-element array of labels");
    }
    edge_labels.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  ChainGraphModel model;
  try {
    model.graph = NetworkGraph(labels, edge_labels);
  } catch (const ShapeError& err) {
    throw SchemaError(std::string("invalid graph: ") + err.what());
  }
  if (!doc.at("treatment_mode").is_string()) throw SchemaError("treatment_mode must be a string");
  model.treatment_mode = treatment_mode_from_string(doc.at("treatment_mode").get<std::string>());
  model.h = keyed_values(doc, "h", labels);
  model.gamma = keyed_values(doc, "gamma", labels);
  if (doc.contains("kappa") && !doc.at("kappa").is_null()) {
    model.kappa = keyed_values(doc, "kappa", labels);
  }
  const Json& k = doc.at("k");
  if (!k.is_object()) throw SchemaError("\"k\" must be an object keyed by \"label1|label2\"");
  for (const auto& [key, value] : k.items()) {
    const auto bar = key.find('|');
    if (bar == std::string::npos) throw SchemaError("k key \"" + key + "\" is not of the form label1|label2");
    const auto i = model.graph.find(key.substr(0, bar));
    const auto j = model.graph.find(key.substr(bar + 1));
    if (!i || !j) throw SchemaError("k key \"" + key + "\" names an unknown node");
    if (!value.is_number()) throw SchemaError("k entries must be numbers");
    model.k[Edge::of(*i, *j)] = value.get<double>();
  }
  return model;
}

ChainGraphModel model_from_json(const Json& doc) {
  ChainGraphModel model = model_from_json_unchecked(doc);
  if (auto violations = validate_model(model); !violations.empty()) {
    std::string msg = "invalid model:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw SchemaError(msg);
  }
  return model;
}

std::string model_fingerprint(const ChainGraphModel& model) {
  return sha256_hex(model_to_json(model).dump()).substr(0, 16);
}

// ---------------------------------------------------------------------------
// Treatments and effects

std::string describe_treatment(const TreatmentVector& a,
                               const std::vector<std::string>& labels) {
  if (a.mode() == TreatmentMode::shared) return std::to_string(a.at(0));
  std::string out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.at(i)) out += (out.empty() ? "" : ",") + labels.at(i);
  }
  return out.empty() ? "none" : out;
}

TreatmentVector parse_treatment(std::string_view text, TreatmentMode mode,
                                const std::vector<std::string>& labels) {
  const std::string t(text);
  if (mode == TreatmentMode::shared) {
    if (t == "0" || t == "1") return TreatmentVector::shared(t == "1" ? 1 : 0);
    throw ConfigError("shared-mode treatment must be 0 or 1, got \"" + t + "\"");
  }
  const std::size_t n = labels.size();
  std::vector<int> values(n, 0);
  if (t == "none") return TreatmentVector::per_node(values);
  if (t == "all") return TreatmentVector::per_node(std::vector<int>(n, 1));
  if (t.size() == n && t.find_first_not_of("01") == std::string::npos) {
    for (std::size_t i = 0; i < n; ++i) values[i] = t[i] == '1';
    return TreatmentVector::per_node(values);
  }
  for (const auto& label : split_labels(t)) {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw ConfigError("unknown node label in treatment: \"" + label + "\"");
    values[static_cast<std::size_t>(it - labels.begin())] = 1;
  }
  return TreatmentVector::per_node(values);
}

Json effect_to_json(const EffectEstimate& effect, const std::vector<std::string>& labels) {
  Json doc;
  doc["scale"] = std::string(to_string(effect.scale));
  doc["point"] = effect.point;
  if (effect.se) doc["se"] = *effect.se;
  if (effect.ci_low) doc["ci_low"] = *effect.ci_low;
  if (effect.ci_high) doc["ci_high"] = *effect.ci_high;
  doc["a1"] = describe_treatment(effect.a1, labels);
  doc["a0"] = describe_treatment(effect.a0, labels);
  doc["event"] = effect.event;
  doc["p1"] = effect.p1;
  doc["p0"] = effect.p0;
  doc["model_fingerprint"] = effect.model_fingerprint;
  return doc;
}

// ---------------------------------------------------------------------------
// CSV

bool CsvReader::next(std::vector<std::string>& fields) {
  fields.clear();
  if (in_.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  char ch;
  ++line_;
  while (in_.get(ch)) {
    any = true;
    if (quoted) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      break;
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (quoted) throw SchemaError("unterminated quoted field near line " + std::to_string(line_));
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_dataset_csv(const CaseDataset& data, std::ostream& out) {
  const auto& labels = data.labels();
  out << "case_id";
  for (const auto& l : labels) out << ',' << csv_escape("y_" + l);
  if (data.treatment_mode() == TreatmentMode::shared) {
    out << ",a";
  } else {
    for (const auto& l : labels) out << ',' << csv_escape("a_" + l);
  }
  if (data.has_covariates()) {
    for (const auto& l : labels) out << ',' << csv_escape("c_" + l);
  }
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& row = data.row(r);
    out << csv_escape(data.case_ids()[r]);
    for (std::size_t i = 0; i < labels.size(); ++i) out << ',' << row.y[i];
    for (std::uint8_t v : row.a.values()) out << ',' << int{v};
    if (row.c) {
      for (std::uint8_t v : row.c->values()) out << ',' << int{v};
    }
    out << '\n';
  }
}

CaseDataset read_dataset_csv(std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header) || header.empty() || header[0] != "case_id") {
    throw SchemaError("dataset CSV must start with a case_id column");
  }
  std::vector<std::string> labels;
  std::vector<std::size_t> y_cols, a_cols, c_cols;
  std::optional<std::size_t> shared_col;
  for (std::size_t col = 1; col < header.size(); ++col) {
    const std::string& h = header[col];
    if (h == "a") {
      shared_col = col;
    } else if (h.rfind("y_", 0) == 0) {
      labels.push_back(h.substr(2));
      y_cols.push_back(col);
    } else if (h.rfind("a_", 0) == 0) {
      a_cols.push_back(col);
    } else if (h.rfind("c_", 0) == 0) {
      c_cols.push_back(col);
    } else {
      throw SchemaError("unexpected dataset column \"" + h + "\"");
    }
  }
  if (labels.empty()) throw SchemaError("dataset CSV has no y_<label> columns");
  if (shared_col.has_value() == !a_cols.empty()) {
    throw SchemaError("dataset CSV needs either an `a` column or a_<label> columns");
  }
  const std::size_t n = labels.size();
  if (!a_cols.empty() && a_cols.size() != n) throw SchemaError("a_<label> column count mismatch");
  if (!c_cols.empty() && c_cols.size() != n) throw SchemaError("c_<label> column count mismatch");
  for (std::size_t i = 0; i < a_cols.size(); ++i) {
    if (header[a_cols[i]] != "a_" + labels[i]) throw SchemaError("a_<label> columns must follow y_<label> order");
  }
  for (std::size_t i = 0; i < c_cols.size(); ++i) {
    if (header[c_cols[i]] != "c_" + labels[i]) throw SchemaError("c_<label> columns must follow y_<label> order");
  }
  const TreatmentMode mode = shared_col ? TreatmentMode::shared : TreatmentMode::per_node;

  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw SchemaError("non-integer value \"" + s + "\" near line " + std::to_string(reader.line()));
    }
  };
  std::vector<CaseDataset::Row> rows;
  std::vector<std::string> ids;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw SchemaError("row near line " + std::to_string(reader.line()) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    try {
      std::vector<int> y, a, c;
      for (auto col : y_cols) y.push_back(to_int(fields[col]));
      CaseDataset::Row row;
      row.y = OutcomeVector(y);
      if (shared_col) {
        row.a = TreatmentVector::shared(to_int(fields[*shared_col]));
      } else {
        for (auto col : a_cols) a.push_back(to_int(fields[col]));
        row.a = TreatmentVector::per_node(a);
      }
      if (!c_cols.empty()) {
        for (auto col : c_cols) c.push_back(to_int(fields[col]));
        row.c = CovariateVector(c);
      }
      rows.push_back(std::move(row));
    } catch (const ShapeError& e) {
      throw SchemaError(std::string(e.what()) + " near line " + std::to_string(reader.line()));
    }
    ids.push_back(fields[0]);
  }
  return CaseDataset(std::move(labels), mode, !c_cols.empty(), std::move(rows), std::move(ids));
}

// ---------------------------------------------------------------------------
// Files and hashing

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return buffer.str();
}

std::string file_sha256(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << contents;
  if (!out) throw IoError("error writing " + path.string());
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

}  // namespace chaingraph
