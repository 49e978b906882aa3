#include "fggsl/cli.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace fggsl;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "fggsl");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t lines(const fs::path& p) {
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("gen writes the same dataset twice") {
    test::TempDir dir("cligen");
    const auto a = (dir.path / "a").string(), b = (dir.path / "b").string();
    REQUIRE(run({"gen", "--out", a, "--n", "30", "--splits", "2", "--seed", "4"}) == kExitOk);
    REQUIRE(run({"gen", "--out", b, "--n", "30", "--splits", "2", "--seed", "4"}) == kExitOk);
    for (const char* f : {"node_feature_label.txt", "graph_edges.txt", "splits/split_0.txt", "splits/split_1.txt"})
        CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
    CHECK(run({"gen", "--out", a, "--n", "2", "--classes", "3"}) == kExitInvalid);
}

TEST_CASE("train is byte-identical across runs and writes its artifacts") {
    test::TempDir dir("clitrain");
    const auto data = (dir.path / "data").string();
    REQUIRE(run({"gen", "--out", data, "--n", "30", "--splits", "2", "--features", "4"}) == kExitOk);
    const auto o1 = dir.path / "o1", o2 = dir.path / "o2";
    const std::vector<std::string> common{"--data", data, "--epochs", "5", "--J", "2", "--candidate", "given"};
    auto with_out = [&](const fs::path& out) {
        std::vector<std::string> v{"train", "--out", out.string()};
        v.insert(v.end(), common.begin(), common.end());
        return v;
    };
    REQUIRE(run(with_out(o1)) == kExitOk);
    REQUIRE(run(with_out(o2)) == kExitOk);
    CHECK(slurp(o1 / "report.json") == slurp(o2 / "report.json"));
    CHECK(slurp(o1 / "splits.csv") == slurp(o2 / "splits.csv"));
    CHECK(lines(o1 / "splits.csv") == 3);
    CHECK(fs::exists(o1 / "manifest.json"));
    CHECK(fs::exists(o1 / "checkpoints" / "split_1.ckpt"));

    SUBCASE("the checkpoint feeds the audit and similarity analyses") {
        const auto ck = (o1 / "checkpoints" / "split_0.ckpt").string();
        const auto a = dir.path / "an";
        CHECK(run({"analyze", "audit", "--data", data, "--checkpoint", ck, "--out", a.string()}) == kExitOk);
        CHECK(fs::exists(a / "audit.json"));
        CHECK(run({"analyze", "similarity", "--data", data, "--checkpoint", ck, "--out", a.string()}) == kExitOk);
        CHECK(fs::exists(a / "similarity_embedding.csv"));
    }
}

TEST_CASE("exit codes") {
    test::TempDir dir("cliexit");
    const auto data = dir.path / "data";
    REQUIRE(run({"gen", "--out", data.string(), "--n", "30", "--splits", "1"}) == kExitOk);
    const auto out = (dir.path / "out").string();

    std::ofstream(dir.path / "bad.json") << R"({"alpha": -1})";
    CHECK(run({"train", "--data", data.string(), "--out", out, "--config", (dir.path / "bad.json").string()}) ==
          kExitInvalid);
    CHECK(run({"analyze", "bogus", "--out", out}) == kExitInvalid);
    CHECK(run({"train", "--data", data.string()}) == kExitInvalid);
    CHECK(run({"train", "--data", data.string(), "--out", out, "--candidate", "knn:0"}) == kExitInvalid);

    fs::remove(data / "graph_edges.txt");
    CHECK(run({"train", "--data", data.string(), "--out", out}) == kExitIo);
    CHECK(run({"train", "--data", (dir.path / "none").string(), "--out", out}) == kExitIo);
}

TEST_CASE("response analysis writes one row per grid point, scale and bank") {
    test::TempDir dir("cliresp");
    REQUIRE(run({"analyze", "response", "--J", "3", "--grid", "21", "--out", dir.path.string()}) == kExitOk);
    CHECK(lines(dir.path / "response.csv") == 1 + 2 * 2 * 21);
    REQUIRE(run({"analyze", "prop1", "--trials", "200", "--out", dir.path.string()}) == kExitOk);
    CHECK(slurp(dir.path / "prop1.json").find("\"violations\": 0") != std::string::npos);
}
