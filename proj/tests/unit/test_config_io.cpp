#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "moncap/config.hpp"
#include "moncap/io.hpp"

using namespace moncap;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "moncap_unit" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("config_io") {
  TEST_CASE("shipped configs parse") {
    for (const auto& entry : std::filesystem::directory_iterator(MONCAP_CONFIG_DIR)) {
      INFO(entry.path().string());
      CHECK_NOTHROW(ExperimentConfig::load(entry.path()));
    }
    const ExperimentConfig c = ExperimentConfig::load(std::filesystem::path(MONCAP_CONFIG_DIR) / "annulus_p2.json");
    CHECK(c.N == 64);
    CHECK(c.N_list == std::vector<int>{32, 64, 128});
    REQUIRE(c.oracle.has_value());
    CHECK(c.oracle->evaluate(c.flux) == doctest::Approx(4.532360141827194));
  }

  TEST_CASE("schema errors name the path") {
    auto message = [](const json& j) {
      try {
        ExperimentConfig::from_json(j);
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message({{"mesh", {{"N", 8}, {"M", 3}}}}).find("mesh: unknown key 'M'") != std::string::npos);
    CHECK(message({{"bogus", 1}}).find("unknown key 'bogus'") != std::string::npos);
    CHECK(message({{"mesh", {{"N", 1}}}}).find("mesh.N") != std::string::npos);
    CHECK(message({{"E", {{"disk", {{"cx", 2.0}, {"cy", 0.5}, {"r", 0.1}}}}}}).find("E:") == 0);
    CHECK(message({{"flux", {{"kind", "p_laplacian"}, {"p", 0.5}}}}).find("flux:") == 0);
    CHECK(message({{"suite", {{"name", "order"}, {"fluxes", 3}}}}).find("suite.fluxes") == 0);
    CHECK(message({{"oracle", {{"value", 1.0}, {"strip", json::object()}}}}).find("oracle") == 0);
    CHECK_FALSE(message({{"mesh", {{"N", 8}}}, {"seed", 5}}).size());
  }

  TEST_CASE("config hash") {
    const json a = json::parse(R"({"mesh": {"N": 8, "L": 1}, "s": 2})");
    const json b = json::parse(R"({"s": 2, "mesh": {"L": 1, "N": 8}})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(a) != config_hash(json::parse(R"({"mesh": {"N": 9, "L": 1}, "s": 2})")));
    CHECK(config_hash(json::object()) == config_hash(json::object()));
  }

  TEST_CASE("atomic writes and ledger lines") {
    const auto dir = scratch("io");
    write_atomic(dir / "a" / "x.json", "one");
    write_atomic(dir / "a" / "x.json", "two");
    CHECK(slurp(dir / "a" / "x.json") == "two");
    CHECK_FALSE(std::filesystem::exists(dir / "a" / "x.json.tmp"));
    append_jsonl(dir / "ledger.jsonl", {{"k", 1}});
    append_jsonl(dir / "ledger.jsonl", {{"k", 2}});
    CHECK(slurp(dir / "ledger.jsonl") == "{\"k\":1}\n{\"k\":2}\n");
    CHECK(dump_report({{"a", 1}}) == "{\n  \"a\": 1\n}\n");
  }

  TEST_CASE("field formats") {
    const Mesh m(2, 1.0);
    std::vector<double> u(m.num_nodes(), 0.0);
    u[m.node_index(0, 2)] = 1.0;
    const std::string pgm = field_pgm(m, u, 0.0, 1.0);
    const std::string header = "P5\n3 3\n255\n";
    REQUIRE(pgm.size() == header.size() + 9);
    CHECK(pgm.substr(0, header.size()) == header);
    CHECK(static_cast<unsigned char>(pgm[header.size()]) == 255);
    CHECK(static_cast<unsigned char>(pgm[header.size() + 8]) == 0);
    const std::string csv = field_csv(m, u);
    CHECK(csv.rfind("x,y,u\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
    NodeSet e = NodeSet::empty(m);
    e.insert(m.node_index(2, 0));
    const std::string mask = mask_pgm(m, e);
    CHECK(static_cast<unsigned char>(mask.back()) == 255);
    CHECK(history_csv({ResidualRecord{1, 1e-2, 0.5, 1.0}}).rfind("iteration,eps,residual,step\n1,", 0) == 0);
  }
}
