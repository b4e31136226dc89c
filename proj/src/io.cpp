#include "moncap/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace moncap {

std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string dump_report(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string field_csv(const Mesh& mesh, std::span<const double> u) {
  std::ostringstream out;
  out.precision(17);
  out << "x,y,u\n";
  for (std::size_t k = 0; k < mesh.num_nodes(); ++k) {
    const auto& x = mesh.node(k);
    out << x.x() << ',' << x.y() << ',' << u[k] << '\n';
  }
  return out.str();
}

namespace {

std::string pgm(int width, int height, const std::vector<unsigned char>& pixels) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(pixels.begin(), pixels.end());
  return out;
}

}  // namespace

std::string field_pgm(const Mesh& mesh, std::span<const double> u, double lo, double hi) {
  const int np = mesh.cells() + 1;
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> pixels;
  pixels.reserve(static_cast<std::size_t>(np) * np);
  for (int j = np - 1; j >= 0; --j) {
    for (int i = 0; i < np; ++i) {
      const double t = std::clamp((u[mesh.node_index(i, j)] - lo) / span, 0.0, 1.0);
      pixels.push_back(static_cast<unsigned char>(std::lround(255.0 * t)));
    }
  }
  return pgm(np, np, pixels);
}

std::string mask_pgm(const Mesh& mesh, const NodeSet& set) {
  std::vector<double> u(mesh.num_nodes());
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = set.contains(k) ? 1.0 : 0.0;
  return field_pgm(mesh, u, 0.0, 1.0);
}

std::string history_csv(const std::vector<ResidualRecord>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,eps,residual,step\n";
  for (const auto& r : history) out << r.iteration << ',' << r.eps << ',' << r.residual << ',' << r.step << '\n';
  return out.str();
}

std::string sweep_csv(const std::vector<CapacityReport>& reports) {
  std::ostringstream out;
  out.precision(17);
  out << "s,c_inner,c_outer,c_energy,c_hat,residual_max,converged\n";
  for (const auto& r : reports) {
    out << r.s << ',' << r.c_inner << ',' << r.c_outer << ',' << r.c_energy << ',' << r.c_hat << ','
        << r.residual_max << ',' << (r.converged ? 1 : 0) << '\n';
  }
  return out.str();
}

void append_jsonl(const std::filesystem::path& path, const nlohmann::json& line) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << line.dump() << '\n';
}

}  // namespace moncap
