#include "perturbench/bundle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "perturbench/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pbench {

namespace {

void require_little_endian() {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  if constexpr (std::endian::native != std::endian::little) {
    throw Error(ErrorCode::io, "bundle payloads are little-endian; big-endian hosts unsupported");
  }
}

std::vector<std::string> split_tsv_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

MatF read_f32_matrix(const std::string& path, int64_t rows, int64_t cols,
                     const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, what + ": cannot open " + path);
  in.seekg(0, std::ios::end);
  int64_t bytes = static_cast<int64_t>(in.tellg());
  int64_t expected = rows * cols * 4;
  if (bytes != expected) {
    throw Error(ErrorCode::validation,
                what + ": " + path + " holds " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(expected) + " (" + std::to_string(rows) + "x" +
                    std::to_string(cols) + " float32)");
  }
  in.seekg(0);
  MatF m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), expected);
  if (!in) throw Error(ErrorCode::io, what + ": short read from " + path);
  for (int64_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      throw Error(ErrorCode::validation,
                  what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
  return m;
}

void write_f32_matrix(const std::string& path, const MatF& m, const std::string& what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, what + ": cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size()) * 4);
  if (!out) throw Error(ErrorCode::io, what + ": write failed for " + path);
}

void check_raw_counts(const MatF& m) {
  for (int64_t i = 0; i < m.size(); ++i) {
    float v = m.data()[i];
    if (v < 0.0f || v != std::floor(v)) {
      throw Error(ErrorCode::validation,
                  "expression: raw_counts layout requires non-negative integers, found " +
                      std::to_string(v) + " at flat index " + std::to_string(i));
    }
  }
}

std::string layout_name(ExprLayout l) {
  return l == ExprLayout::raw_counts ? "raw_counts" : "lognorm";
}

ExprLayout layout_from_name(const std::string& s) {
  if (s == "raw_counts") return ExprLayout::raw_counts;
  if (s == "lognorm") return ExprLayout::lognorm;
  throw Error(ErrorCode::validation, "manifest.json: unknown expression layout '" + s + "'");
}

}  // namespace

void Metadata::reindex() {
  auto code = [](const std::vector<std::string>& col, std::vector<int32_t>& idx,
                 std::vector<std::string>& names) {
    std::set<std::string> uniq(col.begin(), col.end());
    names.assign(uniq.begin(), uniq.end());
    std::map<std::string, int32_t> lookup;
    for (size_t i = 0; i < names.size(); ++i) lookup[names[i]] = static_cast<int32_t>(i);
    idx.resize(col.size());
    for (size_t i = 0; i < col.size(); ++i) idx[i] = lookup[col[i]];
  };
  code(batch, batch_idx, batch_names);
  code(perturbation, pert_idx, pert_names);
}

Metadata Metadata::subset(const std::vector<int32_t>& rows) const {
  Metadata out;
  out.sample_id.reserve(rows.size());
  for (int32_t r : rows) {
    out.sample_id.push_back(sample_id[r]);
    out.perturbation.push_back(perturbation[r]);
    out.batch.push_back(batch[r]);
    out.is_control.push_back(is_control[r]);
    out.cell_line.push_back(cell_line[r]);
  }
  out.reindex();
  return out;
}

std::vector<int32_t> Dataset::control_rows() const {
  std::vector<int32_t> out;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (meta.is_control[i]) out.push_back(static_cast<int32_t>(i));
  }
  return out;
}

std::vector<int32_t> Dataset::rows_for_batch(int32_t batch_index) const {
  std::vector<int32_t> out;
  for (size_t i = 0; i < meta.n_samples(); ++i) {
    if (meta.batch_idx[i] == batch_index) out.push_back(static_cast<int32_t>(i));
  }
  return out;
}

Dataset Dataset::subset(const std::vector<int32_t>& rows) const {
  Dataset out;
  out.control_label = control_label;
  out.meta = meta.subset(rows);
  if (expression) {
    ExpressionMatrix e;
    e.gene_ids = expression->gene_ids;
    e.layout = expression->layout;
    e.values.resize(static_cast<int64_t>(rows.size()), expression->values.cols());
    for (size_t i = 0; i < rows.size(); ++i) e.values.row(i) = expression->values.row(rows[i]);
    out.expression = std::move(e);
  }
  for (const auto& [name, emb] : embeddings) {
    EmbeddingMatrix e;
    e.provenance = emb.provenance;
    e.values.resize(static_cast<int64_t>(rows.size()), emb.values.cols());
    for (size_t i = 0; i < rows.size(); ++i) e.values.row(i) = emb.values.row(rows[i]);
    out.embeddings.emplace(name, std::move(e));
  }
  return out;
}

bool LinkDatabase::contains(const std::string& a, const std::string& b) const {
  auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  return std::binary_search(links.begin(), links.end(), key);
}

Dataset load_bundle(const std::string& dir) {
  require_little_endian();
  fs::path root(dir);
  if (!fs::exists(root / "manifest.json")) {
    throw Error(ErrorCode::io, "manifest.json not found in " + dir);
  }
  json manifest;
  try {
    manifest = json::parse(read_text_file((root / "manifest.json").string()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, std::string("manifest.json: parse error: ") + e.what());
  }

  auto require = [&](const char* field) -> const json& {
    if (!manifest.contains(field)) {
      throw Error(ErrorCode::validation, std::string("manifest.json: missing field '") + field + "'");
    }
    return manifest.at(field);
  };

  if (require("dtype").get<std::string>() != "f32le") {
    throw Error(ErrorCode::validation,
                "manifest.json: dtype must be 'f32le', got '" +
                    manifest["dtype"].get<std::string>() + "'");
  }
  int64_t n_samples = require("n_samples").get<int64_t>();
  if (n_samples <= 0) throw Error(ErrorCode::validation, "manifest.json: n_samples must be positive");

  Dataset ds;
  if (manifest.contains("control_label")) {
    ds.control_label = manifest["control_label"].get<std::string>();
  }

  // metadata.tsv
  {
    std::string text = read_text_file((root / "metadata.tsv").string());
    std::istringstream lines(text);
    std::string line;
    if (!std::getline(lines, line)) {
      throw Error(ErrorCode::validation, "metadata.tsv: empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_tsv_line(line);
    std::vector<std::string> expect = {"sample_id", "perturbation", "batch", "is_control",
                                       "cell_line"};
    if (header != expect) {
      throw Error(ErrorCode::validation,
                  "metadata.tsv: header must be sample_id/perturbation/batch/is_control/cell_line");
    }
    int64_t row = 0;
    while (std::getline(lines, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto f = split_tsv_line(line);
      if (f.size() != 5) {
        throw Error(ErrorCode::validation,
                    "metadata.tsv: row " + std::to_string(row) + " has " +
                        std::to_string(f.size()) + " fields, expected 5");
      }
      if (f[3] != "0" && f[3] != "1") {
        throw Error(ErrorCode::validation,
                    "metadata.tsv: row " + std::to_string(row) + ": is_control must be 0 or 1");
      }
      ds.meta.sample_id.push_back(f[0]);
      ds.meta.perturbation.push_back(f[1]);
      ds.meta.batch.push_back(f[2]);
      ds.meta.is_control.push_back(f[3] == "1" ? 1 : 0);
      ds.meta.cell_line.push_back(f[4]);
      ++row;
    }
    if (row != n_samples) {
      throw Error(ErrorCode::validation,
                  "metadata.tsv: row mismatch: " + std::to_string(row) + " rows vs n_samples " +
                      std::to_string(n_samples));
    }
  }
  {
    std::unordered_set<std::string> seen;
    for (size_t i = 0; i < ds.meta.sample_id.size(); ++i) {
      if (!seen.insert(ds.meta.sample_id[i]).second) {
        throw Error(ErrorCode::validation,
                    "metadata.tsv: duplicate sample_id '" + ds.meta.sample_id[i] + "'");
      }
      bool labeled_control = ds.meta.perturbation[i] == ds.control_label;
      if (labeled_control != (ds.meta.is_control[i] != 0)) {
        throw Error(ErrorCode::validation,
                    "metadata.tsv: row " + std::to_string(i) +
                        ": is_control inconsistent with control label '" + ds.control_label + "'");
      }
    }
  }
  ds.meta.reindex();

  if (manifest.contains("expression")) {
    const json& ex = manifest["expression"];
    if (!manifest.contains("gene_ids")) {
      throw Error(ErrorCode::validation, "manifest.json: expression requires gene_ids");
    }
    ExpressionMatrix e;
    e.gene_ids = manifest["gene_ids"].get<std::vector<std::string>>();
    {
      std::unordered_set<std::string> uniq(e.gene_ids.begin(), e.gene_ids.end());
      if (uniq.size() != e.gene_ids.size()) {
        throw Error(ErrorCode::validation, "manifest.json: gene_ids contains duplicates");
      }
    }
    int64_t n_genes = manifest.contains("n_genes") ? manifest["n_genes"].get<int64_t>()
                                                   : static_cast<int64_t>(e.gene_ids.size());
    if (n_genes != static_cast<int64_t>(e.gene_ids.size())) {
      throw Error(ErrorCode::validation, "manifest.json: n_genes disagrees with gene_ids length");
    }
    e.layout = layout_from_name(ex.at("layout").get<std::string>());
    std::string file = ex.value("file", std::string("expression.f32"));
    e.values = read_f32_matrix((root / file).string(), n_samples, n_genes, "expression");
    if (e.layout == ExprLayout::raw_counts) check_raw_counts(e.values);
    ds.expression = std::move(e);
  }

  if (manifest.contains("embeddings")) {
    for (const auto& [name, spec] : manifest["embeddings"].items()) {
      EmbeddingMatrix emb;
      int64_t dim = spec.at("dim").get<int64_t>();
      if (dim <= 0) {
        throw Error(ErrorCode::validation, "manifest.json: embedding '" + name + "' has dim <= 0");
      }
      std::string file = spec.value("file", "embeddings/" + name + ".f32");
      emb.provenance = spec.value("provenance", std::string());
      emb.values = read_f32_matrix((root / file).string(), n_samples, dim, "embedding '" + name + "'");
      ds.embeddings.emplace(name, std::move(emb));
    }
  }
  return ds;
}

void save_bundle(const Dataset& ds, const std::string& dir) {
  require_little_endian();
  if (ds.meta.n_samples() == 0) {
    throw Error(ErrorCode::validation, "cannot save a bundle with zero samples");
  }
  for (const auto& [name, emb] : ds.embeddings) {
    if (emb.values.rows() != static_cast<int64_t>(ds.meta.n_samples())) {
      throw Error(ErrorCode::validation,
                  "embedding '" + name + "' row count disagrees with metadata");
    }
    if (name.find_first_not_of(
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-") !=
        std::string::npos) {
      throw Error(ErrorCode::validation, "embedding name '" + name + "' has unsafe characters");
    }
  }
  if (ds.expression) {
    if (ds.expression->values.rows() != static_cast<int64_t>(ds.meta.n_samples())) {
      throw Error(ErrorCode::validation, "expression row count disagrees with metadata");
    }
    if (ds.expression->layout == ExprLayout::raw_counts) check_raw_counts(ds.expression->values);
  }

  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create directory " + dir + ": " + ec.message());

  json manifest;
  manifest["format_version"] = 1;
  manifest["dtype"] = "f32le";
  manifest["n_samples"] = ds.meta.n_samples();
  manifest["control_label"] = ds.control_label;
  if (ds.expression) {
    manifest["n_genes"] = ds.expression->gene_ids.size();
    manifest["gene_ids"] = ds.expression->gene_ids;
    manifest["expression"] = {{"file", "expression.f32"},
                              {"layout", layout_name(ds.expression->layout)}};
    write_f32_matrix((root / "expression.f32").string(), ds.expression->values, "expression");
  }
  if (!ds.embeddings.empty()) {
    fs::create_directories(root / "embeddings", ec);
    if (ec) throw Error(ErrorCode::io, "cannot create embeddings directory: " + ec.message());
    json embs = json::object();
    for (const auto& [name, emb] : ds.embeddings) {
      std::string file = "embeddings/" + name + ".f32";
      embs[name] = {{"file", file},
                    {"dim", emb.values.cols()},
                    {"provenance", emb.provenance}};
      write_f32_matrix((root / file).string(), emb.values, "embedding '" + name + "'");
    }
    manifest["embeddings"] = embs;
  }

  std::ostringstream meta_out;
  meta_out << "sample_id\tperturbation\tbatch\tis_control\tcell_line\n";
  for (size_t i = 0; i < ds.meta.n_samples(); ++i) {
    for (const std::string* field : {&ds.meta.sample_id[i], &ds.meta.perturbation[i],
                                     &ds.meta.batch[i], &ds.meta.cell_line[i]}) {
      if (field->find_first_of("\t\n\r") != std::string::npos) {
        throw Error(ErrorCode::validation,
                    "metadata field contains tab/newline at row " + std::to_string(i));
      }
    }
    meta_out << ds.meta.sample_id[i] << '\t' << ds.meta.perturbation[i] << '\t'
             << ds.meta.batch[i] << '\t' << (ds.meta.is_control[i] ? '1' : '0') << '\t'
             << ds.meta.cell_line[i] << '\n';
  }
  write_text_file((root / "metadata.tsv").string(), meta_out.str());
  write_text_file((root / "manifest.json").string(), manifest.dump(2) + "\n");
}

std::string describe_bundle(const Dataset& ds) {
  std::ostringstream out;
  out << "samples: " << ds.meta.n_samples() << "\n";
  out << "batches: " << ds.meta.batch_names.size() << "\n";
  out << "perturbations: " << ds.meta.pert_names.size() << "\n";
  size_t n_ctl = 0;
  for (uint8_t c : ds.meta.is_control) n_ctl += c;
  out << "control samples: " << n_ctl << " (label '" << ds.control_label << "')\n";
  if (ds.expression) {
    out << "expression: " << ds.expression->values.rows() << " x "
        << ds.expression->values.cols() << " (" << layout_name(ds.expression->layout) << ")\n";
  } else {
    out << "expression: none\n";
  }
  out << "embeddings: " << ds.embeddings.size() << "\n";
  for (const auto& [name, emb] : ds.embeddings) {
    out << "  " << name << ": dim " << emb.values.cols();
    if (!emb.provenance.empty()) out << " (" << emb.provenance << ")";
    out << "\n";
  }
  return out.str();
}

LinkDatabase load_link_db(const std::string& path, const std::string& name) {
  std::string text = read_text_file(path);
  LinkDatabase db;
  db.name = name.empty() ? fs::path(path).stem().string() : name;
  std::istringstream lines(text);
  std::string line;
  std::vector<std::pair<std::string, std::string>> pairs;
  int64_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tsv_line(line);
    if (f.size() < 2 || f[0].empty() || f[1].empty()) {
      throw Error(ErrorCode::validation,
                  db.name + ": line " + std::to_string(lineno) + ": expected two tab-separated genes");
    }
    if (f[0] == f[1]) {
      ++db.dropped_self;
      continue;
    }
    if (f[0] < f[1]) {
      pairs.emplace_back(f[0], f[1]);
    } else {
      pairs.emplace_back(f[1], f[0]);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (i > 0 && pairs[i] == pairs[i - 1]) {
      ++db.dropped_duplicate;
      continue;
    }
    db.links.push_back(pairs[i]);
  }
  if (db.links.empty()) {
    throw Error(ErrorCode::validation, db.name + ": link database is empty after filtering");
  }
  return db;
}

}  // namespace pbench
