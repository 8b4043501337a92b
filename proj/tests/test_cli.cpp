#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include <ecoflux/io.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = ECOFLUX_CLI_PATH;
const std::string kModels = ECOFLUX_MODELS_DIR;

std::string model(const std::string& name) { return kModels + "/" + name; }

int run(const std::string& args) {
  std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -2;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "ecoflux_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::map<std::string, std::string> slurp_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ifstream in(entry.path(), std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
    out[entry.path().filename().string()] = content;
  }
  return out;
}

int column_of(const ecoflux::Csv& t, const std::string& name) {
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (t.header[c] == name) return static_cast<int>(c);
  return -1;
}

}  // namespace

TEST_CASE("validate accepts the bundled models") {
  CHECK(run("validate " + model("hippe.model")) == 0);
  CHECK(run("validate " + model("hallam.model")) == 0);
}

TEST_CASE("exit codes distinguish the failure families") {
  fs::path dir = fresh_dir("exit_codes");

  SECTION("missing input file") {
    CHECK(run("validate /nonexistent/zz.model") == 3);
  }
  SECTION("unparseable model") {
    fs::path bad = dir / "bad.model";
    ecoflux::write_file(bad, "[model]\nn = \n");
    CHECK(run("validate " + bad.string()) == 1);
  }
  SECTION("too few samples") {
    CHECK(run("simulate " + model("hippe.model") + " --samples 3 --out " +
              (dir / "o").string()) == 1);
  }
  SECTION("coefficient failure mid-run") {
    fs::path blow = dir / "blowup.model";
    ecoflux::write_file(blow,
                        "[model]\nn = 1\n[inputs]\n1 = 1\n[flows]\n"
                        "[outputs]\n1 = 1/(7 - 2*t)\n[initial]\n1 = 1\n");
    CHECK(run("simulate " + blow.string() + " --t1 10 --samples 11 --out " +
              (dir / "b").string()) == 2);
  }
  SECTION("transient needs a path") {
    CHECK(run("transient " + model("chain2.model") + " --out " +
              (dir / "t").string()) == 1);
  }
  SECTION("unknown path node") {
    CHECK(run("transient " + model("chain2.model") +
              " --path '1: 1 -> zz' --out " + (dir / "t2").string()) == 1);
  }
  SECTION("unknown pair name") {
    CHECK(run("indices " + model("hippe.model") + " --pair 9,2 --out " +
              (dir / "p").string()) == 1);
  }
  SECTION("discrete flag is rejected off the table commands") {
    CHECK(run("simulate " + model("hippe.model") + " --discrete --out " +
              (dir / "d").string()) == 1);
  }
  SECTION("uncreatable output directory") {
    // A regular file in the middle of the path blocks create_directories
    // for any caller, privileged or not.
    fs::path blocker = dir / "blocker";
    ecoflux::write_file(blocker, "not a directory\n");
    CHECK(run("simulate " + model("hippe.model") + " --out " +
              (blocker / "sub").string()) == 3);
  }
}

TEST_CASE("simulate exports the substorage table") {
  fs::path dir = fresh_dir("simulate");
  REQUIRE(run("simulate " + model("hippe.model") +
              " --t1 10 --samples 21 --out " + dir.string()) == 0);

  ecoflux::Csv t = ecoflux::read_csv((dir / "storage.csv").string());
  REQUIRE(t.header.size() == 7);
  CHECK(t.header[0] == "t");
  CHECK(t.header[1] == "x_1_0");
  CHECK(t.header[2] == "x_1_1");
  CHECK(t.header[3] == "x_1_2");
  CHECK(t.header[4] == "x_2_0");
  CHECK(t.header[5] == "x_2_1");
  CHECK(t.header[6] == "x_2_2");
  REQUIRE(t.rows.size() == 21);
  CHECK(t.rows.front()[0].num == 0.0);
  CHECK(t.rows.back()[0].num == 10.0);
  // Initial stocks start in column 0 of each row block.
  CHECK(t.rows.front()[1].num == 3.0);
  CHECK(t.rows.front()[2].num == 0.0);
}

TEST_CASE("json format mirrors the csv export") {
  fs::path dir = fresh_dir("json");
  REQUIRE(run("simulate " + model("hippe.model") +
              " --t1 5 --samples 11 --format both --out " + dir.string()) ==
          0);
  CHECK(fs::exists(dir / "storage.csv"));
  REQUIRE(fs::exists(dir / "storage.json"));

  std::ifstream in(dir / "storage.json");
  nlohmann::json j = nlohmann::json::parse(in);
  REQUIRE(j.contains("columns"));
  REQUIRE(j.contains("rows"));
  CHECK(j["columns"][0] == "t");
  CHECK(j["rows"].size() == 11);
}

TEST_CASE("masked donors are labeled in the decomposition tables") {
  fs::path dir = fresh_dir("masked");
  REQUIRE(run("diact " + model("chain2.model") +
              " --t1 50 --samples 11 --variants d --out " + dir.string()) ==
          0);
  ecoflux::Csv t = ecoflux::read_csv((dir / "flow_composite_d.csv").string());
  int mcol = column_of(t, "masked");
  REQUIRE(mcol >= 0);
  REQUIRE(t.rows.size() == 11);

  // Nothing has flowed at t = 0: both donors masked. The second
  // compartment has no boundary input, so it stays masked throughout.
  // A lone numeric label reads back as a number cell.
  CHECK(t.rows.front()[static_cast<std::size_t>(mcol)].str == "1 2");
  const ecoflux::Cell& last = t.rows.back()[static_cast<std::size_t>(mcol)];
  CHECK(last.kind == ecoflux::Cell::number);
  CHECK(last.num == 2.0);
}

TEST_CASE("undefined residence times export as empty fields") {
  fs::path dir = fresh_dir("residence");
  REQUIRE(run("partition " + model("chain2.model") +
              " --t1 50 --samples 11 --out " + dir.string()) == 0);
  ecoflux::Csv t = ecoflux::read_csv((dir / "residence.csv").string());
  int r1 = column_of(t, "r_1");
  int r2 = column_of(t, "r_2");
  REQUIRE(r1 >= 0);
  REQUIRE(r2 >= 0);
  CHECK(t.rows.front()[static_cast<std::size_t>(r1)].kind ==
        ecoflux::Cell::empty);
  CHECK(t.rows.front()[static_cast<std::size_t>(r2)].kind ==
        ecoflux::Cell::empty);
  CHECK(t.rows.back()[static_cast<std::size_t>(r2)].kind ==
        ecoflux::Cell::number);
}

TEST_CASE("transient traces export per path") {
  fs::path dir = fresh_dir("transient");
  REQUIRE(run("transient " + model("chain2.model") +
              " --t1 20 --samples 11 --path '1: 1 -> 2' --out " +
              dir.string()) == 0);
  REQUIRE(fs::exists(dir / "transient_1.csv"));
  ecoflux::Csv t = ecoflux::read_csv((dir / "transient_1.csv").string());
  CHECK(t.rows.size() == 11);
}

TEST_CASE("identical report runs are byte identical") {
  fs::path dir = fresh_dir("determinism");
  std::string args = "report " + model("hippe.model") +
                     " --t1 10 --samples 41 --out " + dir.string();
  REQUIRE(run(args) == 0);
  std::map<std::string, std::string> first = slurp_dir(dir);
  REQUIRE(first.count("manifest.json") == 1);
  REQUIRE(first.size() > 5);

  fs::remove_all(dir);
  fs::create_directories(dir);
  REQUIRE(run(args) == 0);
  std::map<std::string, std::string> second = slurp_dir(dir);

  REQUIRE(first.size() == second.size());
  for (const auto& [name, content] : first) {
    INFO("file: " << name);
    REQUIRE(second.count(name) == 1);
    CHECK(second.at(name) == content);
  }
}

TEST_CASE("manifest checksums match the written files") {
  fs::path dir = fresh_dir("manifest");
  REQUIRE(run("report " + model("hippe.model") +
              " --t1 10 --samples 21 --out " + dir.string()) == 0);
  std::ifstream in(dir / "manifest.json");
  nlohmann::json j = nlohmann::json::parse(in);
  REQUIRE(j.contains("files"));
  REQUIRE(j["files"].size() > 0);
  std::map<std::string, std::string> files = slurp_dir(dir);
  for (const auto& f : j["files"]) {
    std::string name = f["name"].get<std::string>();
    REQUIRE(files.count(name) == 1);
    const std::string& content = files.at(name);
    CHECK(f["bytes"].get<std::uint64_t>() == content.size());
    CHECK(f["fnv1a64"].get<std::string>() ==
          ecoflux::hex64(ecoflux::fnv1a64(content)));
  }
}

TEST_CASE("table snapshots run through the discrete pipeline") {
  fs::path dir = fresh_dir("discrete");
  fs::path table = dir / "steady.csv";
  ecoflux::write_file(table,
                      "t,z_1,z_2,y_1,y_2,x_1,x_2,f_2_1,f_1_2\r\n"
                      "0,3,3,1,5,3,3,4,2\r\n");
  REQUIRE(run("diact " + table.string() + " --discrete --variants d --out " +
              (dir / "out").string()) == 0);
  ecoflux::Csv t =
      ecoflux::read_csv((dir / "out" / "throughflow.csv").string());
  REQUIRE(t.rows.size() == 1);
  REQUIRE(fs::exists(dir / "out" / "flow_d.csv"));
  REQUIRE(fs::exists(dir / "out" / "storage.csv"));
}
