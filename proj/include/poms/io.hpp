#pragma once

// Serialization: model checkpoints and archive snapshots as JSON, curves as
// CSV, plus small file helpers. JSON numbers and the to_chars-based CSV
// formatting both use shortest round-trip representations, so every double
// survives a save/load cycle bit-exactly and rewrites are byte-identical.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poms/archive.hpp"
#include "poms/autoencoder.hpp"
#include "poms/envs.hpp"
#include "poms/errors.hpp"
#include "poms/metrics.hpp"
#include "poms/policy.hpp"

namespace poms {

using Json = nlohmann::json;

inline constexpr const char* kEngineVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Plain-text helpers.

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ParseError("not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// CSV: coverage and mixing curves.

inline std::string coverage_csv(const CoverageCurve& curve) {
  std::string out = "evals,coverage\n";
  for (const auto& pt : curve.points) {
    out += std::to_string(pt.evals);
    out += ',';
    out += format_double(pt.coverage);
    out += '\n';
  }
  return out;
}

inline CoverageCurve coverage_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != "evals,coverage")
    throw ParseError("coverage CSV must start with header 'evals,coverage'");
  CoverageCurve curve;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (fields.size() != 2) throw ParseError("coverage CSV row needs 2 fields");
    CurvePoint pt;
    pt.evals = static_cast<std::size_t>(std::stoull(fields[0]));
    pt.coverage = parse_double(fields[1]);
    curve.points.push_back(pt);
  }
  return curve;
}

inline std::string mixing_csv(std::span<const double> ratios) {
  std::string out = "loop,ratio\n";
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    out += format_double(ratios[i]);
    out += '\n';
  }
  return out;
}

inline std::vector<double> mixing_from_csv(const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != "loop,ratio")
    throw ParseError("mixing CSV must start with header 'loop,ratio'");
  std::vector<double> ratios;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (fields.size() != 2) throw ParseError("mixing CSV row needs 2 fields");
    ratios.push_back(parse_double(fields[1]));
  }
  return ratios;
}

// Per-seed final coverages, the input format of the stats subcommand.
inline std::string finals_csv(std::span<const std::uint64_t> seeds,
                              std::span<const double> finals) {
  std::string out = "seed,final_coverage\n";
  for (std::size_t i = 0; i < finals.size(); ++i) {
    out += std::to_string(seeds[i]);
    out += ',';
    out += format_double(finals[i]);
    out += '\n';
  }
  return out;
}

// Rollout trace for debugging: t, state..., action... (final row: state only).
inline std::string rollout_trace_csv(const Rollout& ro) {
  std::string out = "t,state...,action...\n";
  for (std::size_t t = 0; t < ro.states.size(); ++t) {
    out += std::to_string(t);
    for (double v : ro.states[t]) {
      out += ',';
      out += format_double(v);
    }
    if (t < ro.actions.size())
      for (double v : ro.actions[t]) {
        out += ',';
        out += format_double(v);
      }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON: latent-model checkpoints.

inline Json matrix_to_json(const Matrix& m) {
  return Json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline Matrix matrix_from_json(const Json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.rows * m.cols) throw ParseError("matrix data length mismatch");
  m.data = data;
  return m;
}

inline Json model_to_json(const LatentModel& model) {
  Json j{{"format", "poms-latent-model"}, {"version", 1}};
  if (model.kind == LatentKind::nonlinear_ae) {
    const AeParams& ae = model.ae;
    j["kind"] = "nonlinear-ae";
    j["input_dim"] = ae.input_dim;
    j["hidden_dim"] = ae.hidden_dim;
    j["latent_dim"] = ae.latent_dim;
    j["enc_w1"] = ae.enc_w1.data;
    j["enc_b1"] = ae.enc_b1;
    j["enc_w2"] = ae.enc_w2.data;
    j["enc_b2"] = ae.enc_b2;
    j["dec_w1"] = ae.dec_w1.data;
    j["dec_b1"] = ae.dec_b1;
    j["dec_w2"] = ae.dec_w2.data;
    j["dec_b2"] = ae.dec_b2;
  } else {
    j["kind"] = "linear-pca";
    j["mean"] = model.pca.mean;
    j["components"] = matrix_to_json(model.pca.components);
    j["explained_variance"] = model.pca.explained_variance;
  }
  return j;
}

inline LatentModel model_from_json(const Json& j) {
  if (j.value("format", "") != "poms-latent-model")
    throw ParseError("not a latent-model checkpoint");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear-pca") {
    PcaResult pca;
    pca.mean = j.at("mean").get<std::vector<double>>();
    pca.components = matrix_from_json(j.at("components"));
    pca.explained_variance = j.at("explained_variance").get<std::vector<double>>();
    return make_pca_model(std::move(pca));
  }
  if (kind != "nonlinear-ae") throw ParseError("unknown model kind: " + kind);
  AeParams ae;
  ae.input_dim = j.at("input_dim").get<std::size_t>();
  ae.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  ae.latent_dim = j.at("latent_dim").get<std::size_t>();
  auto load_matrix = [&j](const char* key, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    const auto data = j.at(key).get<std::vector<double>>();
    if (data.size() != rows * cols) throw ParseError(std::string(key) + " length mismatch");
    m.data = data;
    return m;
  };
  ae.enc_w1 = load_matrix("enc_w1", ae.hidden_dim, ae.input_dim);
  ae.enc_w2 = load_matrix("enc_w2", ae.latent_dim, ae.hidden_dim);
  ae.dec_w1 = load_matrix("dec_w1", ae.hidden_dim, ae.latent_dim);
  ae.dec_w2 = load_matrix("dec_w2", ae.input_dim, ae.hidden_dim);
  ae.enc_b1 = j.at("enc_b1").get<std::vector<double>>();
  ae.enc_b2 = j.at("enc_b2").get<std::vector<double>>();
  ae.dec_b1 = j.at("dec_b1").get<std::vector<double>>();
  ae.dec_b2 = j.at("dec_b2").get<std::vector<double>>();
  if (ae.enc_b1.size() != ae.hidden_dim || ae.enc_b2.size() != ae.latent_dim ||
      ae.dec_b1.size() != ae.hidden_dim || ae.dec_b2.size() != ae.input_dim)
    throw ParseError("autoencoder bias length mismatch");
  return make_ae_model(std::move(ae));
}

// ---------------------------------------------------------------------------
// JSON: archive snapshots.

inline Json shape_to_json(const PolicyShape& shape) {
  return Json{{"input_dim", shape.input_dim},
              {"hidden", shape.hidden},
              {"output_dim", shape.output_dim}};
}

inline PolicyShape shape_from_json(const Json& j) {
  PolicyShape shape;
  shape.input_dim = j.at("input_dim").get<std::size_t>();
  shape.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  shape.output_dim = j.at("output_dim").get<std::size_t>();
  return shape;
}

inline Json grid_to_json(const GridSpec& grid) {
  Json dims = Json::array();
  for (const auto& d : grid.dims) {
    Json dim{{"kind", d.kind == GridDim::Kind::continuous ? "continuous" : "categorical"},
             {"bins", d.bins}};
    if (d.kind == GridDim::Kind::continuous) {
      dim["lower"] = d.lower;
      dim["upper"] = d.upper;
    }
    dims.push_back(dim);
  }
  return Json{{"dims", dims}};
}

inline GridSpec grid_from_json(const Json& j) {
  GridSpec grid;
  for (const auto& dim : j.at("dims")) {
    GridDim d;
    const std::string kind = dim.at("kind").get<std::string>();
    if (kind == "continuous") {
      d.kind = GridDim::Kind::continuous;
      d.lower = dim.at("lower").get<double>();
      d.upper = dim.at("upper").get<double>();
    } else if (kind == "categorical") {
      d.kind = GridDim::Kind::categorical;
    } else {
      throw ParseError("unknown grid dimension kind: " + kind);
    }
    d.bins = dim.at("bins").get<std::size_t>();
    grid.dims.push_back(d);
  }
  return grid;
}

inline Json archive_to_json(const Archive& archive, const PolicyShape& shape) {
  Json j{{"format", "poms-archive"},
         {"version", 1},
         {"grid", grid_to_json(archive.grid())},
         {"policy_shape", shape_to_json(shape)}};
  Json cells = Json::array();
  archive.for_each([&](std::size_t flat, const Archive::Cell& cell) {
    cells.push_back(Json{{"index", flat},
                         {"bd", cell.bd_raw},
                         {"eval", cell.eval_index},
                         {"theta", cell.params.values}});
  });
  j["cells"] = std::move(cells);
  return j;
}

struct ArchiveSnapshot {
  Archive archive;
  PolicyShape shape;
};

inline ArchiveSnapshot archive_from_json(const Json& j) {
  if (j.value("format", "") != "poms-archive") throw ParseError("not an archive snapshot");
  ArchiveSnapshot snap{Archive(grid_from_json(j.at("grid"))),
                       shape_from_json(j.at("policy_shape"))};
  Rng dummy(0);  // restoring vacant cells never consults the rng
  for (const auto& cell : j.at("cells")) {
    ParamVector pv;
    pv.shape = snap.shape;
    pv.values = cell.at("theta").get<std::vector<double>>();
    BehaviourDescriptor bd =
        make_descriptor(cell.at("bd").get<std::vector<double>>(), snap.archive.grid());
    snap.archive.insert(pv, bd, cell.at("eval").get<std::size_t>(), dummy);
  }
  return snap;
}

// ---------------------------------------------------------------------------
// FNV-1a hash of a canonical JSON dump (nlohmann objects iterate in sorted
// key order, so the dump is key-order independent by construction).

inline std::string json_hash_hex(const Json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

}  // namespace poms
