#include "radnerlab/pipeline.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace radnerlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("radnerlab_test_" + name);
    fs::remove_all(dir);
    return dir;
}

nlohmann::json small_run(const std::string& economy, const fs::path& out) {
    return {{"economy", economy},
            {"grid", {{"nodes", {81}}, {"time_steps", 40}}},
            {"mc", {{"paths", 1000}, {"steps", 40}, {"seed", 3}}},
            {"validation", {{"samples", 32}}},
            {"gains", {{"paths", 2000}, {"steps", 40}, {"record_every", 10}}},
            {"radner", {{"paths", 200}, {"steps", 20}}},
            {"output", out.string()}};
}

RunConfig small_config(const std::string& economy, const fs::path& out, const ConfigOverrides& over = {}) {
    return parse_run_config(small_run(economy, out), RADNERLAB_CONFIG_DIR, over);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(RunConfig, EconomyPathIsRelativeToConfigFile) {
    auto c = load_run_config(testing_support::config_path("log1_run.json"));
    EXPECT_EQ(c.nodes, std::vector<int>{201});
    EXPECT_EQ(c.time_steps, 200);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.economy, testing_support::config_json("log1.json"));
}

TEST(RunConfig, InlineEconomy) {
    auto doc = small_run("unused", "out");
    doc["economy"] = testing_support::config_json("log2.json");
    auto c = parse_run_config(doc, ".");
    EXPECT_EQ(load_economy(c.economy).agent_count(), 2);
}

TEST(RunConfig, SeedIsMandatory) {
    auto doc = small_run("log1.json", "out");
    doc["mc"].erase("seed");
    try {
        parse_run_config(doc, RADNERLAB_CONFIG_DIR);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos);
    }
    ConfigOverrides over;
    over.seed = 12;
    EXPECT_EQ(parse_run_config(doc, RADNERLAB_CONFIG_DIR, over).seed, 12u);
}

TEST(RunConfig, NumericSettingsMustBePositive) {
    for (auto [sec, key] : {std::pair{"grid", "time_steps"}, std::pair{"mc", "paths"}, std::pair{"radner", "steps"},
                            std::pair{"negishi", "tolerance"}, std::pair{"completeness", "threshold"}}) {
        auto doc = small_run("log1.json", "out");
        doc[sec][key] = 0;
        EXPECT_THROW(parse_run_config(doc, RADNERLAB_CONFIG_DIR), ConfigError) << sec << "." << key;
    }
    auto doc = small_run("log1.json", "out");
    doc["grid"]["nodes"] = {2};
    EXPECT_THROW(parse_run_config(doc, RADNERLAB_CONFIG_DIR), ConfigError);
}

TEST(RunConfig, GridScaleMultipliesIntervals) {
    ConfigOverrides over;
    over.grid_scale = 2.0;
    auto c = small_config("log1.json", "out", over);
    EXPECT_EQ(c.nodes, std::vector<int>{161});
    EXPECT_EQ(c.time_steps, 80);
}

TEST(RunConfig, HashTracksNumbersOnly) {
    auto a = small_config("log1.json", "a");
    auto b = small_config("log1.json", "b");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    ConfigOverrides over;
    over.seed = 4;
    EXPECT_NE(small_config("log1.json", "a", over).hash(), a.hash());
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
}

TEST(FieldCsv, RoundTripIsExact) {
    auto econ = testing_support::config_economy("log1.json");
    auto g = build_grid(econ.region(), {11}, 1.0, 4, econ.diffusion().x0);
    auto f1 = SpaceTimeField::like(g);
    auto f2 = SpaceTimeField::like(g);
    for (std::size_t i = 0; i < f1.data.size(); ++i) {
        f1.data[i] = std::exp(0.37 * static_cast<double>(i)) / 3.0;
        f2.data[i] = -1.0 / (1.0 + static_cast<double>(i));
    }
    auto dir = scratch("csv");
    fs::create_directories(dir);
    write_field_csv(dir / "f.csv", g, {"a", "b"}, {&f1, &f2});
    auto back = read_field_csv(dir / "f.csv", g, 2);
    EXPECT_EQ(back[0].data, f1.data);
    EXPECT_EQ(back[1].data, f2.data);
    auto other = build_grid(econ.region(), {11}, 2.0, 4, econ.diffusion().x0);
    EXPECT_THROW(read_field_csv(dir / "f.csv", other, 2), Error);
    EXPECT_THROW(read_field_csv(dir / "missing.csv", g, 2), Error);
    fs::remove_all(dir);
}

TEST(Pipeline, Log1StagesPass) {
    auto dir = scratch("log1");
    Pipeline pipe(small_config("log1.json", dir));
    for (auto r : {pipe.validate(), pipe.solve_ad(), pipe.price(), pipe.completeness(), pipe.radner()}) {
        EXPECT_TRUE(r.ok) << r.stage << ": " << r.verdict;
        ASSERT_TRUE(fs::exists(r.report));
        auto j = nlohmann::json::parse(slurp(r.report));
        EXPECT_EQ(j["schema_version"], schema_version);
        EXPECT_EQ(j["config_hash"], pipe.config().hash());
        EXPECT_EQ(j["seed"], 3);
        EXPECT_EQ(j["stage"], r.stage);
    }
    EXPECT_TRUE(fs::exists(dir / "psi.csv"));
    EXPECT_TRUE(fs::exists(dir / "prices.csv"));
    EXPECT_TRUE(fs::exists(dir / "det.csv"));
    fs::remove_all(dir);
}

TEST(Pipeline, RunsAreByteIdentical) {
    auto a = scratch("repro_a");
    auto b = scratch("repro_b");
    for (const auto& dir : {a, b}) {
        Pipeline pipe(small_config("log2.json", dir));
        pipe.validate();
        pipe.solve_ad();
        pipe.price();
        pipe.completeness();
        pipe.radner();
    }
    int files = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        ++files;
        EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path().filename();
    }
    EXPECT_GE(files, 8);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Pipeline, LaterStagesNeedEarlierOutputs) {
    auto dir = scratch("order");
    Pipeline pipe(small_config("log1.json", dir));
    EXPECT_THROW(pipe.price(), Error);
    fs::remove_all(dir);
}

TEST(Pipeline, StaleEquilibriumIsRejected) {
    auto dir = scratch("stale");
    Pipeline(small_config("log1.json", dir)).solve_ad();
    ConfigOverrides over;
    over.seed = 99;
    Pipeline other(small_config("log1.json", dir, over));
    EXPECT_THROW(other.price(), Error);
    fs::remove_all(dir);
}

TEST(Pipeline, RedundantMarketReportsWitnesses) {
    auto dir = scratch("redundant");
    Pipeline pipe(small_config("redundant.json", dir));
    EXPECT_FALSE(pipe.validate().ok);
    pipe.solve_ad();
    pipe.price();
    auto r = pipe.completeness();
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.verdict, "INCOMPLETE-ON-GRID");
    ASSERT_TRUE(r.body.contains("witnesses"));
    EXPECT_FALSE(r.body["witnesses"].empty());
    EXPECT_FALSE(pipe.radner().ok);
    fs::remove_all(dir);
}
