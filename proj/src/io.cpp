#include "hypalign/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <variant>

namespace hypalign::io {

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::invalid_argument("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::invalid_argument("cannot open '" + path.string() + "' for writing");
  return out;
}

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool skippable(const std::string& line) {
  return line.find_first_not_of(" \t") == std::string::npos || line[0] == '#';
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  double value = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    fail(path, line, "invalid number '" + s + "'");
  }
  return value;
}

long parse_int(const std::string& s, const fs::path& path, std::size_t line) {
  long value = 0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) fail(path, line, "invalid integer '" + s + "'");
  return value;
}

void put_f64(std::ostream& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  out.write(bytes, 8);
}

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw ParseError("checkpoint: parameter block is truncated");
  }
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  double x;
  std::memcpy(&x, &bits, sizeof x);
  return x;
}

}  // namespace

LabelPairs read_pairs(const fs::path& path) {
  auto in = open_in(path);
  LabelPairs pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
      fail(path, lineno, "expected two tab-separated labels");
    }
    pairs.emplace_back(cols[0], cols[1]);
  }
  return pairs;
}

void write_pairs(const fs::path& path, const LabelPairs& pairs) {
  auto out = open_out(path);
  for (const auto& [a, b] : pairs) out << a << '\t' << b << '\n';
}

Hierarchy read_edge_list(const fs::path& path) {
  const auto pairs = read_pairs(path);
  try {
    return Hierarchy::from_label_pairs(pairs);
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_edge_list(const fs::path& path, const Hierarchy& h) {
  LabelPairs pairs;
  pairs.reserve(h.edges().size());
  for (const auto& e : h.edges()) pairs.emplace_back(h.labels()[e.child], h.labels()[e.parent]);
  write_pairs(path, pairs);
}

PointCloud read_embedding(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  long count = -1;
  long dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (skippable(line)) continue;
    std::istringstream header(line);
    std::string a, b, extra;
    if (!(header >> a >> b) || (header >> extra)) fail(path, lineno, "expected '<count> <dim>'");
    count = parse_int(a, path, lineno);
    dim = parse_int(b, path, lineno);
    break;
  }
  if (count < 1 || dim < 1) fail(path, lineno, "header needs positive count and dimension");

  std::vector<std::string> labels;
  Points points(count, dim);
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto cols = split(line, '\t');
    if (static_cast<long>(cols.size()) != dim + 1) {
      fail(path, lineno, "expected label and " + std::to_string(dim) + " coordinates");
    }
    if (static_cast<long>(labels.size()) == count) fail(path, lineno, "more rows than declared");
    const auto row = static_cast<Eigen::Index>(labels.size());
    for (long k = 0; k < dim; ++k) points(row, k) = parse_double(cols[k + 1], path, lineno);
    if (!(points.row(row).squaredNorm() < 1.0)) fail(path, lineno, "point outside the unit ball");
    labels.push_back(cols[0]);
  }
  if (static_cast<long>(labels.size()) != count) {
    fail(path, lineno, "expected " + std::to_string(count) + " rows, found " +
                           std::to_string(labels.size()));
  }
  auto cloud = PointCloud::uniform(std::move(labels), std::move(points));
  try {
    cloud.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return cloud;
}

void write_embedding(const fs::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  out << cloud.size() << ' ' << cloud.dim() << '\n';
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << cloud.labels[i];
    for (int k = 0; k < cloud.dim(); ++k) {
      out << '\t' << format_double(cloud.points(static_cast<Eigen::Index>(i), k));
    }
    out << '\n';
  }
}

void write_matching(const fs::path& path, const std::vector<pipeline::RankedList>& lists) {
  auto out = open_out(path);
  for (const auto& l : lists) {
    out << l.source << '\t';
    for (std::size_t r = 0; r < l.candidates.size(); ++r) {
      if (r) out << ',';
      out << l.candidates[r];
    }
    out << '\n';
  }
}

std::vector<pipeline::RankedList> read_matching(const fs::path& path) {
  auto in = open_in(path);
  std::vector<pipeline::RankedList> lists;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (skippable(line)) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2 || cols[0].empty()) fail(path, lineno, "expected 'source<TAB>candidates'");
    pipeline::RankedList l;
    l.source = cols[0];
    if (!cols[1].empty()) l.candidates = split(cols[1], ',');
    lists.push_back(std::move(l));
  }
  return lists;
}

void write_coupling(const fs::path& path, const ot::Coupling& coupling) {
  auto out = open_out(path);
  out << "i\tj\tweight\n";
  const auto& plan = coupling.plan;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
      if (plan(i, j) > 1e-12) out << i << '\t' << j << '\t' << format_double(plan(i, j)) << '\n';
    }
  }
}

void write_argmax(const fs::path& path, const ot::Coupling& coupling,
                  const std::vector<std::string>& source_labels,
                  const std::vector<std::string>& target_labels) {
  const auto argmax = coupling.row_argmax();
  LabelPairs pairs;
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    pairs.emplace_back(source_labels.at(i), target_labels.at(argmax[i]));
  }
  write_pairs(path, pairs);
}

void write_trace(const fs::path& path, const std::vector<pipeline::TraceEntry>& trace) {
  auto out = open_out(path);
  out << "iter,epsilon,sinkhorn_divergence\n";
  for (const auto& e : trace) {
    out << e.iter << ',' << format_double(e.epsilon) << ',' << format_double(e.divergence) << '\n';
  }
}

void write_checkpoint(const fs::path& path, const registration::RegistrationNetwork& net,
                      std::uint64_t seed) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& layer : net.layers) {
    const bool linear = std::holds_alternative<registration::HyperLinearLayer>(layer);
    layers.push_back({{"type", linear ? "hyperlinear" : "mobius"},
                      {"in", registration::layer_in_dim(layer)},
                      {"out", registration::layer_out_dim(layer)}});
  }
  const json header = {{"format", "hypalign-network"},
                       {"version", 1},
                       {"nonlinearity", registration::to_string(net.nonlinearity)},
                       {"margin", net.margin},
                       {"seed", seed},
                       {"param_count", net.parameter_count()},
                       {"layers", layers}};
  auto out = open_out(path, std::ios::binary);
  out << header.dump() << '\n';
  auto copy = net;
  for (const auto& p : copy.parameters()) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) put_f64(out, p.value(r, c));
    }
  }
}

registration::RegistrationNetwork read_checkpoint(const fs::path& path) {
  using nlohmann::json;
  auto in = open_in(path, std::ios::binary);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty checkpoint");
  registration::RegistrationNetwork net;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "hypalign-network") throw ParseError("unknown checkpoint format");
    net.nonlinearity =
        registration::parse_nonlinearity(header.at("nonlinearity").get<std::string>());
    net.margin = header.at("margin").get<double>();
    for (const auto& l : header.at("layers")) {
      const int d_in = l.at("in").get<int>();
      const int d_out = l.at("out").get<int>();
      if (l.at("type") == "hyperlinear") {
        net.layers.emplace_back(registration::HyperLinearLayer{
            registration::Matrix::Zero(d_out, d_in), registration::Vector::Zero(d_out)});
      } else {
        net.layers.emplace_back(registration::MobiusLayer{
            registration::Matrix::Identity(d_in, d_in), registration::Vector::Zero(d_in)});
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }
  for (auto& p : net.parameters()) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = get_f64(in);
    }
  }
  net.validate();
  return net;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace hypalign::io
