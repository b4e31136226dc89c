#ifndef MONCAP_IO_HPP
#define MONCAP_IO_HPP

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "moncap/capacity.hpp"
#include "moncap/mesh.hpp"
#include "moncap/solver.hpp"

namespace moncap {

/// 64-bit FNV-1a of the compact dump, as 16 hex digits. Object keys are
/// serialized in sorted order, so the hash ignores key order.
std::string config_hash(const nlohmann::json& j);

/// Writes to a sibling temporary file, then renames it over the target.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Pretty-printed JSON followed by a newline.
std::string dump_report(const nlohmann::json& j);

/// "x,y,u" rows, one per node.
std::string field_csv(const Mesh& mesh, std::span<const double> u);
/// 8-bit binary PGM, row 0 at the top (largest y), linear map of [lo, hi].
std::string field_pgm(const Mesh& mesh, std::span<const double> u, double lo, double hi);
std::string mask_pgm(const Mesh& mesh, const NodeSet& set);
std::string history_csv(const std::vector<ResidualRecord>& history);
std::string sweep_csv(const std::vector<CapacityReport>& reports);

/// Appends one compact JSON line.
void append_jsonl(const std::filesystem::path& path, const nlohmann::json& line);

}  // namespace moncap

#endif  // MONCAP_IO_HPP
