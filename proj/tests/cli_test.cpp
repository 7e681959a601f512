#include "absieve/commands.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

using namespace absieve;
using absieve::testing::TempDir;
using absieve::testing::read_file;
using absieve::testing::write_file;

namespace {

class Workspace {
  public:
    Workspace() {
        write_file(dir_ / "manifest.csv",
                   "Dataset Name,Inclusion Criteria,Excusion Criteria\n"
                   "IVM,Randomized trials of ivermectin,Reviews\n"
                   "LLM,Studies of language models,Editorials\n");
        write_file(dir_ / "data" / "IVM.csv",
                   "title,abstract,human_decision\nA,alpha,included\nB,,excluded\nC,gamma,included\n");
        write_file(dir_ / "data" / "LLM.csv", "title,abstract,human_decision\nD,delta,excluded\n");
        script(R"({"default": "excluded", "IVM/0": "included", "IVM/2": "included", "latency_ms": 1})");
    }

    void script(std::string_view json) { write_file(dir_ / "script.json", json); }

    [[nodiscard]] ConfigMap values() const {
        return {{"backend.mock_script", (dir_ / "script.json").string()},
                {"runner.requests_per_minute", "600000"},
                {"runner.backoff_base_ms", "0"},
                {"paths.manifest", (dir_ / "manifest.csv").string()},
                {"paths.data_dir", (dir_ / "data").string()},
                {"paths.output_dir", (dir_ / "out").string()}};
    }

    [[nodiscard]] AppConfig config(ConfigMap extra = {}) const {
        auto v = values();
        for (auto& [k, val] : extra) v[k] = val;
        return AppConfig::from_map(v);
    }

    [[nodiscard]] std::filesystem::path out(std::string_view name) const { return dir_ / "out" / name; }
    [[nodiscard]] const TempDir& dir() const { return dir_; }

  private:
    TempDir dir_;
};

std::vector<ScreeningRecord> results(const Workspace& ws, const std::string& name) {
    return parse_dataset(csv::read_file(ws.out(name + ".csv")), name);
}

std::size_t log_lines(const Workspace& ws) {
    const auto text = read_file(ws.out("run_log.jsonl"));
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(ABSIEVE_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Screen, MockBackendThreeRows) {
    Workspace ws;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok) << err.str();
    const auto recs = results(ws, "IVM");
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0].model_decision, Decision::Included);
    EXPECT_EQ(recs[1].model_decision, Decision::Excluded);
    EXPECT_EQ(recs[2].model_decision, Decision::Included);
    EXPECT_EQ(recs[0].human_decision, Decision::Included);
    const auto report = nlohmann::json::parse(read_file(ws.out("report.json")));
    EXPECT_EQ(report["datasets"][0]["rows_screened"], 3);
    EXPECT_EQ(report["datasets"][0]["empty_abstract_count"], 1);
    EXPECT_FALSE(std::filesystem::exists(ws.out("LLM.csv")));
}

TEST(Screen, ResumeDispatchesOnlyUndecidedRows) {
    Workspace ws;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, 1}, out, err), exit_ok);
    EXPECT_EQ(log_lines(ws), 1u);
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", true, {}}, out, err), exit_ok);
    EXPECT_EQ(log_lines(ws), 3u);
    const auto report = nlohmann::json::parse(read_file(ws.out("report.json")));
    EXPECT_EQ(report["datasets"][0]["rows_skipped_resume"], 1);
    EXPECT_EQ(report["datasets"][0]["rows_screened"], 2);
}

TEST(Screen, FreshRunIgnoresOldDecisions) {
    Workspace ws;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok);
    ws.script(R"({"default": "included"})");
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok);
    EXPECT_EQ(results(ws, "IVM")[1].model_decision, Decision::Included);
}

TEST(Screen, PersistentFaultExitsOne) {
    Workspace ws;
    ws.script(R"({"default": "excluded", "failures": {"IVM/1": {"status": 500}}})");
    std::ostringstream out, err;
    EXPECT_EQ(cmd_screen(ws.config({{"runner.max_retries", "1"}}), {"IVM", false, {}}, out, err), exit_row_errors);
    const auto report = nlohmann::json::parse(read_file(ws.out("report.json")));
    EXPECT_EQ(report["datasets"][0]["error_count"], 1);
    EXPECT_EQ(results(ws, "IVM")[1].model_decision, Decision::Error);
}

TEST(Screen, ConfigErrorsExitTwoAndNameField) {
    Workspace ws;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_screen(ws.config({{"paths.manifest", "/nonexistent/m.csv"}}), {}, out, err), exit_failure);
    EXPECT_NE(err.str().find("paths.manifest"), std::string::npos);

    std::ostringstream err2;
    EXPECT_EQ(cmd_screen(ws.config(), {"NOPE", false, {}}, out, err2), exit_failure);
    EXPECT_NE(err2.str().find("UnknownDataset"), std::string::npos);
}

TEST(Screen, HttpBackendWithoutCredential) {
    Workspace ws;
    ::unsetenv("ABSIEVE_NO_SUCH_KEY");
    auto values = ws.values();
    values.erase("backend.mock_script");
    values["backend.base_url"] = "http://127.0.0.1:1";
    values["backend.api_key_env"] = "ABSIEVE_NO_SUCH_KEY";
    std::ostringstream out, err;
    EXPECT_EQ(cmd_screen(AppConfig::from_map(values), {}, out, err), exit_failure);
    EXPECT_NE(err.str().find("AuthMissing"), std::string::npos);
}

TEST(Explain, ReflectFillsDisagreements) {
    Workspace ws;
    ws.script(R"({"default": "included", "reflect": {"default": "I was wrong."}})");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok);
    // row 1 is the only disagreement (human excluded, model included)
    ExplainArgs args{"IVM", 2, {}, FollowupMode::Reflect, 1};
    ASSERT_EQ(cmd_explain(ws.config(), args, out, err), exit_ok) << err.str();
    const auto recs = results(ws, "IVM");
    EXPECT_EQ(recs[1].reflection, "I was wrong.");
    EXPECT_FALSE(recs[0].reflection);
    EXPECT_EQ(recs[1].model_decision, Decision::Included);
}

TEST(Explain, ReflectWithTwoDisagreements) {
    Workspace ws;
    ws.script(R"({"default": "excluded", "IVM/1": "included", "reflect": {"IVM/0": "r0", "IVM/1": "r1", "default": "r"}})");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok);
    // disagreements: row 0 (I vs E), row 1 (E vs I); row 2 also (I vs E) - sample 2 of 3
    ExplainArgs args{"IVM", 2, {}, FollowupMode::Reflect, 42};
    ASSERT_EQ(cmd_explain(ws.config(), args, out, err), exit_ok);
    const auto recs = results(ws, "IVM");
    std::size_t filled = 0;
    for (const auto& r : recs) filled += r.reflection.has_value();
    EXPECT_EQ(filled, 2u);
}

TEST(Explain, NoEligibleRows) {
    Workspace ws;
    ws.script(R"({"IVM/0": "included", "IVM/1": "excluded", "IVM/2": "included"})");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok);
    ExplainArgs args{"IVM", 2, {}, FollowupMode::Reflect, 0};
    EXPECT_EQ(cmd_explain(ws.config(), args, out, err), exit_failure);
    EXPECT_NE(err.str().find("NoEligibleRows"), std::string::npos);
}

TEST(Explain, SameSeedSameRows) {
    Workspace ws;
    std::string data = "title,abstract,human_decision\n";
    for (int i = 0; i < 30; ++i) data += "t" + std::to_string(i) + ",a,excluded\n";
    write_file(ws.dir() / "data" / "IVM.csv", data);
    ws.script(R"({"default": "excluded", "explain": {"default": "because"}})");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok);
    const auto clean = read_file(ws.out("IVM.csv"));

    auto picked = [&](std::uint64_t seed) {
        write_file(ws.out("IVM.csv"), clean);
        EXPECT_EQ(cmd_explain(ws.config(), {"IVM", 5, {}, FollowupMode::Explain, seed}, out, err), exit_ok);
        std::vector<std::size_t> rows;
        for (const auto& r : results(ws, "IVM"))
            if (r.explanation) rows.push_back(r.row_index);
        return rows;
    };
    const auto a = picked(7);
    EXPECT_EQ(a.size(), 5u);
    EXPECT_EQ(a, picked(7));
    EXPECT_NE(a, picked(8));
}

TEST(Explain, ExplicitRows) {
    Workspace ws;
    ws.script(R"({"default": "excluded", "explain": {"IVM/2": "x"}})");
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {"IVM", false, {}}, out, err), exit_ok);
    ASSERT_EQ(cmd_explain(ws.config(), {"IVM", {}, {2}, FollowupMode::Explain, 0}, out, err), exit_ok);
    EXPECT_EQ(results(ws, "IVM")[2].explanation, "x");
    EXPECT_FALSE(results(ws, "IVM")[0].explanation);
}

TEST(Evaluate, SelfAgreement) {
    Workspace ws;
    std::ostringstream out, err;
    EvaluateArgs args;
    args.dataset = "IVM";
    args.truth = args.pred = "human_decision";
    ASSERT_EQ(cmd_evaluate(ws.config(), args, out, err), exit_ok) << err.str();
    const auto doc = nlohmann::json::parse(read_file(ws.out("metrics.json")));
    EXPECT_EQ(doc["datasets"][0]["accuracy"], 1.0);
    EXPECT_EQ(doc["datasets"][0]["kappa"], 1.0);

    // a single class on both sides leaves kappa undefined
    args.dataset = "LLM";
    ASSERT_EQ(cmd_evaluate(ws.config(), args, out, err), exit_ok);
    const auto doc2 = nlohmann::json::parse(read_file(ws.out("metrics.json")));
    EXPECT_TRUE(doc2["datasets"][0]["kappa"].is_null());
    EXPECT_NE(read_file(ws.out("metrics.csv")).find("LLM,1.000,-,1.000,-,-,1,0"), std::string::npos);
}

TEST(Evaluate, MissingPredColumn) {
    Workspace ws;
    std::ostringstream out, err;
    EvaluateArgs args;
    args.pred = "decision";
    EXPECT_EQ(cmd_evaluate(ws.config(), args, out, err), exit_failure);
    EXPECT_NE(err.str().find("MissingColumn"), std::string::npos);
    EXPECT_NE(err.str().find("decision"), std::string::npos);
}

TEST(Evaluate, AllDatasetsAfterScreening) {
    Workspace ws;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_screen(ws.config(), {}, out, err), exit_ok);
    ASSERT_EQ(cmd_evaluate(ws.config(), {}, out, err), exit_ok) << err.str();
    const auto csv_text = read_file(ws.out("metrics.csv"));
    EXPECT_EQ(csv_text.rfind("Dataset,Accuracy,Sensitivity (Included),Sensitivity (Excluded),Kappa (Human),Kappa (Screen)", 0), 0u);
    EXPECT_NE(csv_text.find("\nTotal (Weighted Average),"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(ws.out("confusion_IVM.svg")));
    EXPECT_EQ(read_file(ws.out("confusion_IVM.csv")),
              ",predicted included,predicted excluded\ntruth included,2,0\ntruth excluded,0,1\n");
    const auto doc = nlohmann::json::parse(read_file(ws.out("metrics.json")));
    EXPECT_TRUE(doc["total"]["weighting"].is_string());
    EXPECT_NE(out.str().find("weighting"), std::string::npos);
}

TEST(Evaluate, ReferenceKappaColumn) {
    Workspace ws;
    write_file(ws.dir() / "data" / "IVM.csv",
               "title,abstract,human_decision,reviewer_1,reviewer_2\n"
               "A,x,included,included,included\nB,x,excluded,excluded,included\n"
               "C,x,included,included,included\nD,x,excluded,excluded,excluded\n");
    std::ostringstream out, err;
    EvaluateArgs args;
    args.dataset = "IVM";
    args.pred = "reviewer_1";
    args.reference = std::make_pair(std::string("reviewer_1"), std::string("reviewer_2"));
    ASSERT_EQ(cmd_evaluate(ws.config(), args, out, err), exit_ok) << err.str();
    // reviewer_1 vs reviewer_2: tp=2 fn=0 fp=1 tn=1 -> p_o=0.75, p_e=0.5*0.75+0.5*0.25=0.5, kappa=0.5
    EXPECT_NE(read_file(ws.out("metrics.csv")).find("IVM,1.000,1.000,1.000,0.500,1.000,4,0"), std::string::npos);
}

TEST(Estimate, EmptyDatasetAndAdditivity) {
    Workspace ws;
    write_file(ws.dir() / "data" / "LLM.csv", "title,abstract\n");
    std::ostringstream out, err;
    auto config = ws.config({{"runner.price_per_1k_input", "0.0015"}, {"runner.price_per_1k_output", "0.002"}});
    ASSERT_EQ(cmd_estimate(config, out, err), exit_ok) << err.str();
    const auto doc = nlohmann::json::parse(read_file(ws.out("estimate.json")));
    EXPECT_EQ(doc["datasets"][1]["cost"], 0.0);
    EXPECT_EQ(doc["datasets"][1]["rows"], 0);
    const double sum = doc["datasets"][0]["cost"].get<double>() + doc["datasets"][1]["cost"].get<double>();
    EXPECT_NEAR(doc["totals"]["cost"].get<double>(), sum, 1e-12);
    EXPECT_GT(sum, 0.0);
}

TEST(Config, SectionedFileWithRelativePaths) {
    TempDir dir;
    write_file(dir / "cfg" / "absieve.ini",
               "# comment\n[backend]\nkind = mock\nmock_script = script.json\nmodel = gpt-4o-mini  # inline\n"
               "temperature = 0.2\n[runner]\nmax_in_flight = 2\nrequests_per_minute = 30\n"
               "[paths]\nmanifest = m.csv\ndata_dir = data\noutput_dir = /tmp/x\n");
    const auto c = AppConfig::load(dir / "cfg" / "absieve.ini", {{"runner.max_retries", "9"}});
    EXPECT_EQ(c.backend_kind, BackendKind::Mock);
    EXPECT_EQ(c.mock_script, dir / "cfg" / "script.json");
    EXPECT_EQ(c.manifest, dir / "cfg" / "m.csv");
    EXPECT_EQ(c.output_dir, std::filesystem::path("/tmp/x"));
    EXPECT_EQ(c.runner.model, "gpt-4o-mini");
    EXPECT_DOUBLE_EQ(c.runner.temperature, 0.2);
    EXPECT_EQ(c.runner.max_in_flight, 2);
    EXPECT_EQ(c.runner.requests_per_minute, 30);
    EXPECT_EQ(c.runner.max_retries, 9);
}

TEST(Config, RejectsCredentialsAndBadValues) {
    auto code = [](ConfigMap m) {
        try {
            AppConfig::from_map(m);
        } catch (const error& e) {
            return e.code();
        }
        return errc::fatal;
    };
    EXPECT_EQ(code({{"backend.api_key", "sk-123"}}), errc::config_invalid);
    EXPECT_EQ(code({{"backend.nonsense", "1"}}), errc::config_invalid);
    EXPECT_EQ(code({{"runner.max_in_flight", "zero"}}), errc::config_invalid);
    EXPECT_EQ(code({{"runner.max_in_flight", "0"}}), errc::config_invalid);
    EXPECT_EQ(code({{"backend.kind", "mock"}}), errc::config_invalid);
    EXPECT_EQ(code({{"backend.mock_script", "a.json"}, {"backend.base_url", "http://x"}}), errc::config_invalid);
    EXPECT_EQ(AppConfig::from_map({}).backend_kind, BackendKind::Http);
}

TEST(Binary, ExitCodes) {
    Workspace ws;
    const auto common = " --manifest " + (ws.dir() / "manifest.csv").string() + " --data-dir " +
                        (ws.dir() / "data").string() + " --output-dir " + (ws.dir() / "out").string() +
                        " --mock-script " + (ws.dir() / "script.json").string() + " --rpm 600000";
    EXPECT_EQ(run_cli("screen" + common), 0);
    EXPECT_EQ(run_cli("screen --resume" + common), 0);
    EXPECT_EQ(run_cli("evaluate --all" + common), 0);
    EXPECT_EQ(run_cli("evaluate --dataset IVM --pred nope" + common), 2);
    EXPECT_EQ(run_cli("estimate-cost" + common), 0);
    EXPECT_EQ(run_cli("reflect --dataset IVM --sample 1" + common), 2);  // no disagreements
    EXPECT_EQ(run_cli("explain --dataset IVM --rows 0,2 --seed 3" + common), 0);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("screen --set runner.max_in_flight=0" + common), 2);

    ws.script(R"({"default": "excluded", "failures": {"LLM/0": {"status": 503}}})");
    EXPECT_EQ(run_cli("screen --max-retries 0" + common), 1);
}
