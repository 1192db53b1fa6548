#include "lagcoder/bundle.hpp"

#include "lagcoder/csv.hpp"
#include "lagcoder/error.hpp"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace lagcoder {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "lagcoder-bundle";

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), ErrorCode::InvalidArgument, "trailing characters in " + what);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidArgument, "cannot parse number '" + s + "' in " + what);
  }
}

long long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    require(pos == s.size(), ErrorCode::InvalidArgument, "trailing characters in " + what);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorCode::InvalidArgument, "cannot parse integer '" + s + "' in " + what);
  }
}

std::string crc_hex(std::uint32_t crc) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", crc);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::MissingFile, "missing " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MatrixF matrix_from(std::vector<float>&& data, Eigen::Index rows, Eigen::Index cols) {
  MatrixF m(rows, cols);
  if (!data.empty()) std::memcpy(m.data(), data.data(), data.size() * sizeof(float));
  return m;
}

void check_finite(const MatrixF& m, const std::string& what) {
  require(m.allFinite(), ErrorCode::NonFiniteValue, what + " contains non-finite values");
}

}  // namespace

// ---------------------------------------------------------------- payloads

void write_f32(const fs::path& path, const float* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u;
      std::memcpy(&u, data + i, 4);
      u = __builtin_bswap32(u);
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
  require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
}

std::vector<float> read_f32(const fs::path& path, std::size_t expected_count) {
  require(fs::exists(path), ErrorCode::MissingFile, "missing payload " + path.string());
  const auto bytes = fs::file_size(path);
  require(bytes == expected_count * sizeof(float), ErrorCode::ShapeMismatch,
          path.string() + " holds " + std::to_string(bytes) + " bytes, manifest implies " +
              std::to_string(expected_count * sizeof(float)));
  std::vector<float> out(expected_count);
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  require(static_cast<bool>(in), ErrorCode::IoFailure, "short read on " + path.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& f : out) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
  return out;
}

std::uint32_t crc32_of_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::MissingFile, "missing " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = in.gcount();
    if (got > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
  }
  return static_cast<std::uint32_t>(crc);
}

std::string layer_file_name(int layer, int layer_count) {
  int width = 2;
  for (int n = layer_count; n >= 100; n /= 10) ++width;
  std::string digits = std::to_string(layer);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return "layer_" + digits + ".f32";
}

// ---------------------------------------------------------------- bundle

bool DatasetBundle::preprocessed() const {
  for (const auto& p : provenance) {
    if (p.rfind("preprocess", 0) == 0) return true;
  }
  return false;
}

const EmbeddingSet* DatasetBundle::find_set(std::string_view name) const {
  for (const auto& s : embeddings) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

const EmbeddingSet& DatasetBundle::set(std::string_view name) const {
  const auto* s = find_set(name);
  require(s != nullptr, ErrorCode::MissingSet, "bundle has no embedding set '" + std::string(name) + "'");
  return *s;
}

std::vector<double> DatasetBundle::onsets() const {
  std::vector<double> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(w.onset);
  return out;
}

std::vector<std::size_t> DatasetBundle::electrodes_in(Roi roi, bool selected_only) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    if (electrodes[i].roi == roi && (!selected_only || electrodes[i].selected)) out.push_back(i);
  }
  return out;
}

void DatasetBundle::validate() const {
  signals.validate();
  require(static_cast<Eigen::Index>(electrodes.size()) == signals.n_electrodes(),
          ErrorCode::ShapeMismatch,
          "electrode table has " + std::to_string(electrodes.size()) + " rows but signals have " +
              std::to_string(signals.n_electrodes()));
  std::set<std::string> ids;
  for (const auto& e : electrodes) {
    require(ids.insert(e.id).second, ErrorCode::InvalidArgument, "duplicate electrode id '" + e.id + "'");
  }
  for (std::size_t i = 0; i < words.size(); ++i) {
    require(std::isfinite(words[i].onset), ErrorCode::NonFiniteValue, "word onset is not finite");
    if (i > 0) {
      require(words[i].onset > words[i - 1].onset, ErrorCode::NonMonotonicOnsets,
              "word onsets must be strictly increasing (word " + std::to_string(i) + ")");
    }
  }
  std::set<std::string> names;
  for (const auto& s : embeddings) {
    require(names.insert(s.name).second, ErrorCode::InvalidArgument,
            "duplicate embedding set '" + s.name + "'");
    s.validate(static_cast<Eigen::Index>(words.size()));
  }
}

BundleManifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  require(fs::exists(path), ErrorCode::MissingFile, "missing " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, "manifest is not valid JSON: " + std::string(e.what()));
  }
  BundleManifest m;
  try {
    require(j.value("format", std::string()) == kFormat, ErrorCode::InvalidArgument,
            "manifest format tag is not '" + std::string(kFormat) + "'");
    m.version = j.at("version").get<int>();
    m.n_electrodes = j.at("n_electrodes").get<Eigen::Index>();
    m.n_samples = j.at("n_samples").get<Eigen::Index>();
    m.sample_rate = j.at("sample_rate").get<double>();
    m.t0 = j.value("t0", 0.0);
    m.n_words = j.at("n_words").get<Eigen::Index>();
    for (const auto& s : j.at("embedding_sets")) {
      EmbeddingSetEntry e;
      e.name = s.at("name").get<std::string>();
      e.kind = parse_embedding_kind(s.at("kind").get<std::string>());
      e.layer_count = s.at("layer_count").get<int>();
      e.dim = s.at("dim").get<Eigen::Index>();
      m.sets.push_back(std::move(e));
    }
    if (j.contains("provenance")) m.provenance = j.at("provenance").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, "manifest is missing a field: " + std::string(e.what()));
  }
  require(m.n_electrodes >= 1 && m.n_samples >= 0 && m.n_words >= 0, ErrorCode::InvalidArgument,
          "manifest dimensions are invalid");
  return m;
}

static json read_checksums(const fs::path& dir) {
  const auto j = json::parse(read_text(dir / "manifest.json"));
  return j.value("checksums", json::object());
}

static void verify_checksum(const json& checksums, const fs::path& dir, const std::string& rel) {
  if (!checksums.contains(rel)) return;
  const auto expected = checksums.at(rel).get<std::string>();
  const auto actual = crc_hex(crc32_of_file(dir / rel));
  require(expected == actual, ErrorCode::IoFailure,
          "checksum mismatch for " + rel + " (manifest " + expected + ", file " + actual + ")");
}

MatrixF load_embedding_layer(const fs::path& dir, const std::string& set, int layer) {
  const auto manifest = read_manifest(dir);
  for (const auto& e : manifest.sets) {
    if (e.name != set) continue;
    require(layer >= 1 && layer <= e.layer_count, ErrorCode::InvalidArgument,
            "layer " + std::to_string(layer) + " outside 1.." + std::to_string(e.layer_count));
    const auto path = dir / "embeddings" / set / layer_file_name(layer, e.layer_count);
    auto m = matrix_from(read_f32(path, static_cast<std::size_t>(manifest.n_words * e.dim)),
                         manifest.n_words, e.dim);
    check_finite(m, path.string());
    return m;
  }
  fail(ErrorCode::MissingSet, "bundle has no embedding set '" + set + "'");
}

DatasetBundle load_bundle(const fs::path& dir, const BundleLoadOptions& opts) {
  require(fs::is_directory(dir), ErrorCode::MissingFile, "bundle directory " + dir.string() + " not found");
  const auto manifest = read_manifest(dir);
  const auto checksums = opts.verify_checksums ? read_checksums(dir) : json::object();

  DatasetBundle b;
  b.provenance = manifest.provenance;
  b.signals.sample_rate = manifest.sample_rate;
  b.signals.t0 = manifest.t0;
  b.signals.samples = matrix_from(
      read_f32(dir / "signals.f32", static_cast<std::size_t>(manifest.n_electrodes * manifest.n_samples)),
      manifest.n_electrodes, manifest.n_samples);
  verify_checksum(checksums, dir, "signals.f32");

  // electrodes.csv
  {
    const auto rows = csv::read_file(dir / "electrodes.csv");
    require(!rows.empty(), ErrorCode::ShapeMismatch, "electrodes.csv has no header");
    const auto& h = rows.front();
    const auto c_id = csv::column(h, "id"), c_roi = csv::column(h, "roi"), c_x = csv::column(h, "x"),
               c_y = csv::column(h, "y"), c_z = csv::column(h, "z"), c_sel = csv::column(h, "selected");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      require(row.size() == h.size(), ErrorCode::ShapeMismatch,
              "electrodes.csv row " + std::to_string(r) + " has the wrong field count");
      ElectrodeMeta e;
      e.id = row[c_id];
      e.roi = parse_roi(row[c_roi]);
      if (!row[c_x].empty() || !row[c_y].empty() || !row[c_z].empty()) {
        e.coords = std::array<double, 3>{parse_double(row[c_x], "electrodes.csv"),
                                         parse_double(row[c_y], "electrodes.csv"),
                                         parse_double(row[c_z], "electrodes.csv")};
      }
      e.selected = row[c_sel] == "1" || row[c_sel] == "true";
      b.electrodes.push_back(std::move(e));
    }
  }

  // words.csv
  {
    const auto rows = csv::read_file(dir / "words.csv");
    require(!rows.empty(), ErrorCode::ShapeMismatch, "words.csv has no header");
    const auto& h = rows.front();
    const auto c_idx = csv::column(h, "index"), c_text = csv::column(h, "text"),
               c_on = csv::column(h, "onset_s"), c_rank = csv::column(h, "top_rank");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      require(row.size() == h.size(), ErrorCode::ShapeMismatch,
              "words.csv row " + std::to_string(r) + " has the wrong field count");
      WordEvent w;
      w.index = static_cast<std::size_t>(parse_int(row[c_idx], "words.csv"));
      w.text = row[c_text];
      w.onset = parse_double(row[c_on], "words.csv");
      if (!row[c_rank].empty()) w.top_rank = static_cast<int>(parse_int(row[c_rank], "words.csv"));
      b.words.push_back(std::move(w));
    }
    require(static_cast<Eigen::Index>(b.words.size()) == manifest.n_words, ErrorCode::ShapeMismatch,
            "words.csv has " + std::to_string(b.words.size()) + " rows, manifest says " +
                std::to_string(manifest.n_words));
    bool all_ranked = true;
    for (const auto& w : b.words) all_ranked = all_ranked && w.top_rank.has_value();
    if (all_ranked) b.words = classify_predictability(std::move(b.words));
  }

  if (opts.load_embeddings) {
    for (const auto& e : manifest.sets) {
      EmbeddingSet s;
      s.name = e.name;
      s.kind = e.kind;
      for (int k = 1; k <= e.layer_count; ++k) {
        const auto rel = "embeddings/" + e.name + "/" + layer_file_name(k, e.layer_count);
        s.layers.push_back(matrix_from(read_f32(dir / rel, static_cast<std::size_t>(manifest.n_words * e.dim)),
                                       manifest.n_words, e.dim));
        verify_checksum(checksums, dir, rel);
      }
      b.embeddings.push_back(std::move(s));
    }
  }
  b.validate();
  return b;
}

void write_bundle(const DatasetBundle& bundle, const fs::path& dir) {
  bundle.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorCode::IoFailure,
          "cannot create bundle directory " + dir.string() + (ec ? ": " + ec.message() : ""));

  json checksums = json::object();
  auto record = [&](const std::string& rel) { checksums[rel] = crc_hex(crc32_of_file(dir / rel)); };

  const auto& sig = bundle.signals.samples;
  write_f32(dir / "signals.f32", sig.data(), static_cast<std::size_t>(sig.size()));
  record("signals.f32");

  {
    std::string text = "id,roi,x,y,z,selected\n";
    for (const auto& e : bundle.electrodes) {
      csv::Row row{e.id, std::string(to_string(e.roi)), "", "", "", e.selected ? "1" : "0"};
      if (e.coords) {
        for (int i = 0; i < 3; ++i) row[2 + i] = fmt_double((*e.coords)[i]);
      }
      text += csv::join(row) + "\n";
    }
    write_text(dir / "electrodes.csv", text);
  }
  {
    std::string text = "index,text,onset_s,top_rank\n";
    for (const auto& w : bundle.words) {
      text += csv::join({std::to_string(w.index), w.text, fmt_double(w.onset),
                         w.top_rank ? std::to_string(*w.top_rank) : std::string()}) +
              "\n";
    }
    write_text(dir / "words.csv", text);
  }

  json sets = json::array();
  for (const auto& s : bundle.embeddings) {
    const auto set_dir = dir / "embeddings" / s.name;
    fs::create_directories(set_dir, ec);
    require(!ec, ErrorCode::IoFailure, "cannot create " + set_dir.string());
    for (int k = 1; k <= s.layer_count(); ++k) {
      const auto name = layer_file_name(k, s.layer_count());
      const auto& m = s.layers[static_cast<std::size_t>(k - 1)];
      write_f32(set_dir / name, m.data(), static_cast<std::size_t>(m.size()));
      record("embeddings/" + s.name + "/" + name);
    }
    sets.push_back({{"name", s.name},
                    {"kind", std::string(to_string(s.kind))},
                    {"layer_count", s.layer_count()},
                    {"dim", s.dim()}});
  }

  json manifest = {{"format", kFormat},
                   {"version", 1},
                   {"n_electrodes", bundle.signals.n_electrodes()},
                   {"n_samples", bundle.signals.n_samples()},
                   {"sample_rate", bundle.signals.sample_rate},
                   {"t0", bundle.signals.t0},
                   {"n_words", bundle.words.size()},
                   {"embedding_sets", sets},
                   {"provenance", bundle.provenance},
                   {"checksums", checksums}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------- predictability

Predictability predictability_of_rank(int rank) {
  require(rank >= 1, ErrorCode::OutOfRange, "top_rank must be >= 1");
  if (rank == 1) return Predictability::Top1Predictable;
  if (rank > 5) return Predictability::Top5Unpredictable;
  return Predictability::Neither;
}

std::vector<WordEvent> classify_predictability(std::vector<WordEvent> words, PredictabilityCounts* counts) {
  PredictabilityCounts c;
  for (auto& w : words) {
    require(w.top_rank.has_value(), ErrorCode::MissingRank,
            "word " + std::to_string(w.index) + " ('" + w.text + "') has no top_rank");
    w.predictability = predictability_of_rank(*w.top_rank);
    switch (w.predictability) {
      case Predictability::Top1Predictable: ++c.top1_predictable; break;
      case Predictability::Top5Unpredictable: ++c.top5_unpredictable; break;
      case Predictability::Neither: ++c.neither; break;
    }
  }
  if (counts) *counts = c;
  return words;
}

bool matches(const WordEvent& w, WordCondition condition) {
  switch (condition) {
    case WordCondition::Predictable: return w.predictability == Predictability::Top1Predictable;
    case WordCondition::Unpredictable: return w.predictability == Predictability::Top5Unpredictable;
    case WordCondition::All: return true;
  }
  return true;
}

std::vector<std::size_t> words_in(const std::vector<WordEvent>& words, WordCondition condition) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (matches(words[i], condition)) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------- encodings

void write_encoding(const EncodingMatrix& m, const fs::path& dir, const std::string& stem) {
  m.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::IoFailure, "cannot create " + dir.string());
  MatrixF values = m.values.cast<float>();
  write_f32(dir / (stem + ".f32"), values.data(), static_cast<std::size_t>(values.size()));
  json side = {{"tag", m.tag},
               {"condition", std::string(to_string(m.condition))},
               {"n_layers", m.n_layers()},
               {"n_lags", m.n_lags()},
               {"lags_ms", m.lags_ms},
               {"layers", m.layers}};
  write_text(dir / (stem + ".json"), side.dump(2) + "\n");
}

EncodingMatrix read_encoding(const fs::path& f32_path) {
  auto side_path = f32_path;
  side_path.replace_extension(".json");
  json side;
  try {
    side = json::parse(read_text(side_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, "bad encoding sidecar " + side_path.string() + ": " + e.what());
  }
  EncodingMatrix m;
  const auto rows = side.at("n_layers").get<Eigen::Index>();
  const auto cols = side.at("n_lags").get<Eigen::Index>();
  m.tag = side.value("tag", std::string());
  m.condition = parse_condition(side.value("condition", std::string("all")));
  m.lags_ms = side.at("lags_ms").get<std::vector<int>>();
  m.layers = side.value("layers", std::vector<int>());
  const auto raw = read_f32(f32_path, static_cast<std::size_t>(rows * cols));
  m.values = Eigen::Map<const MatrixF>(raw.data(), rows, cols).cast<double>();
  m.validate();
  return m;
}

}  // namespace lagcoder
