// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
};

Result coopsim(const std::string& args)
{
    const std::string cmd = std::string(COOPSIM_BIN) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    std::string out;
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    const int status = pclose(p);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch()
{
    const auto dir = fs::temp_directory_path() / ("coopsim-cli-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("simulate passes its checks in both modes")
{
    const auto dir = scratch();
    auto on = coopsim("simulate --prediction on --seed 2 --csv " + (dir / "on.csv").string() + " --svg " +
                      (dir / "on.svg").string());
    CHECK(on.code == 0);
    CHECK(on.out.find("collision 0") != std::string::npos);
    CHECK(slurp(dir / "on.svg").find("id=\"crossing\"") != std::string::npos);
    auto off = coopsim("simulate --prediction off --seed 2");
    CHECK(off.code == 0);

    // export re-reads the CSV and writes it back unchanged
    auto ex =
        coopsim("export --format csv --in " + (dir / "on.csv").string() + " --out " + (dir / "again.csv").string());
    CHECK(ex.code == 0);
    CHECK(slurp(dir / "on.csv") == slurp(dir / "again.csv"));
    fs::remove_all(dir);
}

TEST_CASE("simulate reads a scenario file")
{
    const auto dir = scratch();
    std::ofstream(dir / "cfg.json") << R"({"rng_seed": 4, "prediction_enabled": false})";
    CHECK(coopsim("simulate --config " + (dir / "cfg.json").string()).code == 0);
    std::ofstream(dir / "bad.json") << R"({"nonsense": 1})";
    auto bad = coopsim("simulate --config " + (dir / "bad.json").string());
    CHECK(bad.code == 2);
    CHECK(bad.out.find("unknown key") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("compare writes the report")
{
    const auto dir = scratch();
    auto r = coopsim("compare --seed 3 --csv " + (dir / "cmp.csv").string() + " --svg " + (dir / "cmp.svg").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("tv_min_accel") != std::string::npos);
    CHECK(slurp(dir / "cmp.csv").rfind("metric,on,off,delta", 0) == 0);
    CHECK(slurp(dir / "cmp.svg").find("prediction-EV-speed") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("build-table with the shipped fixture")
{
    const auto dir = scratch();
    auto r = coopsim("build-table --lanes 2 --likelihoods " COOP_FIXTURES "/risk_likelihoods.json --csv " +
                     (dir / "t.csv").string() + " --snapshot " + (dir / "t.bin").string());
    CHECK(r.code == 0);
    CHECK(r.out.find("entries 17496") != std::string::npos);
    CHECK(fs::file_size(dir / "t.bin") == 24 + 17496 * 37);
    fs::remove_all(dir);
}

TEST_CASE("bad usage fails")
{
    CHECK(coopsim("").code != 0);
    CHECK(coopsim("simulate --prediction maybe").code != 0);
    CHECK(coopsim("export --in /nonexistent.csv --out /tmp/x.svg").code == 2);
    CHECK(coopsim("rtt --peer nohost").code == 2);
}
