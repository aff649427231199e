#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "slicevol/cli.hpp"
#include "slicevol/error.hpp"
#include "slicevol/io.hpp"

using namespace slicevol;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal() { return json{{"schema_version", 1}}; }

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("slicevol_cfg_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SLICEVOL_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_CASE("run config defaults and overrides") {
    auto c = run_config_from_json(minimal());
    c.finalize();
    CHECK(c.views == 2);
    CHECK(c.model.input_views == 2);
    CHECK(c.dataset.n == 149);
    CHECK(c.methods.size() == 4);

    json j = minimal();
    j["views"] = "single";
    j["seed"] = 7;
    j["methods"] = {"plr", "rvae_fcnr"};
    j["model"] = {{"image_size", 64}, {"channel_widths", {4, 8}}};
    j["folds"] = {{"n_folds", 4}, {"holdout_fold", nullptr}};
    auto d = run_config_from_json(j);
    d.finalize();
    CHECK(d.model.input_views == 1);
    CHECK(d.train.seed == 7);
    CHECK(d.dataset.seed == 7);
    CHECK(d.preprocess.image_size == 64);
    CHECK(d.holdout_fold == -1);
    CHECK(d.methods == std::vector<EstimateMethod>{EstimateMethod::PLR, EstimateMethod::RvaeFcnr});

    // round trip through the serializer
    auto e = run_config_from_json(to_json(d));
    e.finalize();
    CHECK(to_json(e) == to_json(d));
}

TEST_CASE("run config schema violations") {
    json j = minimal();
    j["colour"] = "blue";
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json::object()), ConfigError);
    j = minimal();
    j["schema_version"] = 2;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    j = minimal();
    j["model"] = {{"latent_dims", 3}};
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    j = minimal();
    j["methods"] = {"magic"};
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    j = minimal();
    j["seed"] = "zero";
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    j = minimal();
    j["preprocess"] = {{"mode_filter_size", 4}};
    CHECK_THROWS_WITH_AS(run_config_from_json(j), "invalid kernel", ConfigError);
}

TEST_CASE("cli exit codes") {
    auto dir = scratch("exit");
    CHECK(run_cli("") == 2);
    CHECK(run_cli("generate") == 2);
    CHECK(run_cli("generate --config " + (dir / "nope.json").string()) == 2);

    json bad = minimal();
    bad["unknown"] = 1;
    io::write_text(dir / "bad.json", bad.dump());
    CHECK(run_cli("generate --config " + (dir / "bad.json").string()) == 2);

    json zero = minimal();
    zero["data_dir"] = (dir / "data").string();
    zero["dataset"] = {{"n", 0}};
    io::write_text(dir / "zero.json", zero.dump());
    CHECK(run_cli("generate --config " + (dir / "zero.json").string()) == 2);
    CHECK_FALSE(fs::exists(dir / "data"));

    json ok = minimal();
    ok["data_dir"] = (dir / "data").string();
    ok["output_dir"] = (dir / "out").string();
    io::write_text(dir / "ok.json", ok.dump());
    // no manifest yet
    CHECK(run_cli("preprocess --config " + (dir / "ok.json").string()) == 3);
    CHECK(run_cli("train --config " + (dir / "ok.json").string() + " --views triple") == 2);
}

TEST_CASE("no hold-out evaluation is refused") {
    json j = minimal();
    j["folds"] = {{"holdout_fold", nullptr}};
    auto c = run_config_from_json(j);
    c.finalize();
    std::ostringstream out;
    CHECK_THROWS_WITH(cmd_evaluate(c, out), "no hold-out defined");
}
