#pragma once

#include "hypalign/hierarchy.hpp"
#include "hypalign/ot.hpp"
#include "hypalign/pipeline.hpp"
#include "hypalign/point_cloud.hpp"
#include "hypalign/registration.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hypalign::io {

namespace fs = std::filesystem;

/// Malformed input file; the message carries the path and line number.
class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using LabelPairs = std::vector<std::pair<std::string, std::string>>;

/// Two tab-separated columns per line; blank lines and lines starting with
/// '#' are skipped. Used for edge lists (child, parent) and ground truth
/// (source, target).
LabelPairs read_pairs(const fs::path& path);
void write_pairs(const fs::path& path, const LabelPairs& pairs);

Hierarchy read_edge_list(const fs::path& path);
/// One `child<TAB>parent` line per edge, sorted by (child, parent) index.
void write_edge_list(const fs::path& path, const Hierarchy& h);

/// Header `<count> <dim>`, then `label<TAB>c1<TAB>...<TAB>cd` with 17
/// significant digits. Weights are uniform on read.
PointCloud read_embedding(const fs::path& path);
void write_embedding(const fs::path& path, const PointCloud& cloud);

/// `source<TAB>cand1,cand2,...`
void write_matching(const fs::path& path, const std::vector<pipeline::RankedList>& lists);
std::vector<pipeline::RankedList> read_matching(const fs::path& path);

/// Sparse plan with header `i<TAB>j<TAB>weight`; entries at or below 1e-12
/// are omitted.
void write_coupling(const fs::path& path, const ot::Coupling& coupling);

/// Row-argmax of the plan as `source<TAB>target` label pairs.
void write_argmax(const fs::path& path, const ot::Coupling& coupling,
                  const std::vector<std::string>& source_labels,
                  const std::vector<std::string>& target_labels);

/// CSV `iter,epsilon,sinkhorn_divergence`.
void write_trace(const fs::path& path, const std::vector<pipeline::TraceEntry>& trace);

/// A JSON header line describing the architecture, then the parameters as
/// little-endian doubles in parameters() order, matrices row-major.
void write_checkpoint(const fs::path& path, const registration::RegistrationNetwork& net,
                      std::uint64_t seed);
registration::RegistrationNetwork read_checkpoint(const fs::path& path);

/// Writes `text` to `path`, creating parent directories.
void write_text(const fs::path& path, const std::string& text);

}  // namespace hypalign::io
