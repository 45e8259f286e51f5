// Command-line front end: run system x dataset grids, recompute reports from
// stored transcripts, validate configurations and emit fixture scripts.

#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "kairanban/experiment.hpp"
#include "kairanban/fixtures.hpp"

namespace {

namespace fs = std::filesystem;
using namespace kairanban;

constexpr int kExitOk = 0;
constexpr int kExitCellFailed = 1;
constexpr int kExitConfigInvalid = 2;

struct Options {
    std::vector<std::string> systems{"single", "kcs", "kcs_ibc"};
    std::vector<std::string> datasets{"sst5", "tweeteval", "financial_phrasebank"};
    std::string data_dir = "data";
    std::string fpb_agreement = "75";
    std::string sst5_split = "test";
    int n_agents = 6;
    int ibc_index = 3;
    std::size_t sample_size = 500;
    std::uint64_t seed = 42;
    std::string backend_url;
    std::string api_key;
    std::string model;
    std::string mock_script;
    std::string out = "out";
    std::string finalize = "judge";
    std::string brier = "mean";
    std::string macro_absent = "zero";
    bool exclude_degraded = false;
    std::string templates;
    int workers = 4;
    int max_tokens = 1024;
    // make-script
    std::string script_kind = "converging";
    int labels = 3;
};

DatasetSpec dataset_from_arg(const std::string& arg, const Options& o) {
    const auto eq = arg.find('=');
    const auto name = parse_dataset_name(arg.substr(0, eq));
    if (eq != std::string::npos) {
        auto spec = DatasetSpec::standard(name, arg.substr(eq + 1));
        if (fs::path(spec.path).extension() == ".csv") spec.format = DatasetFormat::Csv;
        return spec;
    }
    const fs::path dir(o.data_dir);
    switch (name) {
        case DatasetName::Sst5:
            return DatasetSpec::standard(name, (dir / fmt::format("sst5_{}.tsv", o.sst5_split)).string());
        case DatasetName::TweetEval:
            return DatasetSpec::standard(name, (dir / "tweeteval.tsv").string());
        case DatasetName::FinancialPhraseBank: {
            const auto tier = o.fpb_agreement == "all" ? std::string("All") : o.fpb_agreement;
            return DatasetSpec::standard(name, (dir / fmt::format("Sentences_{}Agree.txt", tier)).string());
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown dataset " + arg);
}

MetricOptions metric_options(const Options& o) {
    MetricOptions m;
    if (o.brier == "sum") m.brier = BrierConvention::Sum;
    else if (o.brier != "mean") throw Error(ErrorCode::InvalidConfig, "--brier must be mean or sum");
    if (o.macro_absent == "skip") m.macro_absent = AbsentClassPolicy::Skip;
    else if (o.macro_absent != "zero") throw Error(ErrorCode::InvalidConfig, "--macro-absent must be zero or skip");
    m.exclude_degraded = o.exclude_degraded;
    return m;
}

RunConfig build_run_config(const Options& o) {
    RunConfig cfg;
    cfg.systems.clear();
    for (const auto& s : o.systems) cfg.systems.push_back(parse_system(s));
    for (const auto& d : o.datasets) cfg.datasets.push_back(dataset_from_arg(d, o));
    if (o.fpb_agreement != "50" && o.fpb_agreement != "66" && o.fpb_agreement != "75" && o.fpb_agreement != "all") {
        throw Error(ErrorCode::InvalidConfig, "--fpb-agreement must be 50, 66, 75 or all");
    }
    cfg.n_agents = o.n_agents;
    cfg.ibc_index = o.ibc_index;
    cfg.sample_size = o.sample_size;
    cfg.seed = o.seed;
    cfg.model = o.model;
    cfg.max_tokens = o.max_tokens;
    cfg.finalize = parse_finalize(o.finalize);
    cfg.metrics = metric_options(o);
    cfg.out_dir = o.out;
    if (!o.templates.empty()) cfg.templates_dir = o.templates;
    cfg.workers = o.workers;
    cfg.validate();
    return cfg;
}

std::unique_ptr<Backend> build_backend(const Options& o) {
    if (!o.mock_script.empty()) return std::make_unique<ScriptedBackend>(Script::load(o.mock_script));
    HttpBackendConfig http;
    http.base_url = o.backend_url;
    http.api_key = o.api_key;
    http.max_in_flight = o.workers;
    http.apply_environment();
    if (http.base_url.empty()) {
        throw Error(ErrorCode::InvalidConfig, "set --backend-url (or KAIRANBAN_BASE_URL) or --mock-script");
    }
    if (o.model.empty()) throw Error(ErrorCode::InvalidConfig, "--model is required for the HTTP backend");
    return std::make_unique<HttpBackend>(std::move(http));
}

void print_summary(const RunSummary& s) {
    std::set<DatasetName> seen;
    for (const auto& c : s.cells) {
        if (seen.insert(c.dataset).second) std::cout << format_metric_table(s, c.dataset) << '\n';
    }
    if (!s.cross_dataset.empty()) {
        std::cout << "Changes in entropy (average over datasets)\n" << format_step_table(s.cross_dataset, true)
                  << "\nChanges in variance (average over datasets)\n"
                  << format_step_table(s.cross_dataset, false) << '\n';
    }
}

int cmd_run(const Options& o) {
    RunConfig cfg;
    std::unique_ptr<Backend> backend;
    try {
        cfg = build_run_config(o);
        backend = build_backend(o);
    } catch (const Error& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfigInvalid;
    }
    const auto summary = run_experiment(cfg, *backend);
    print_summary(summary);
    std::size_t fresh = 0;
    for (const auto& c : summary.cells) {
        fresh += c.new_instances;
        if (!c.completed) {
            std::cerr << fmt::format("cell {} / {} failed: {}\n", to_string(c.system), to_string(c.dataset), c.error);
        }
    }
    std::cerr << fmt::format("{} new instance runs, {:.0f} ms, outputs in {}\n", fresh, summary.wall_clock_ms,
                             cfg.out_dir.string());
    return summary.any_failed() ? kExitCellFailed : kExitOk;
}

int cmd_report(const Options& o) {
    MetricOptions m;
    try {
        m = metric_options(o);
    } catch (const Error& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfigInvalid;
    }
    if (!fs::exists(transcript_path(o.out, SystemKind::Single, DatasetName::Sst5).parent_path())) {
        std::cerr << "no transcripts under " << o.out << '\n';
        return kExitCellFailed;
    }
    const auto summary = report_from_transcripts(o.out, m);
    write_outputs(o.out, summary);
    print_summary(summary);
    return summary.any_failed() ? kExitCellFailed : kExitOk;
}

int cmd_validate(const Options& o) {
    try {
        const auto cfg = build_run_config(o);
        build_backend(o);
        std::cout << to_json(cfg).dump(2) << '\n';
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfigInvalid;
    }
}

int cmd_make_script(const Options& o) {
    try {
        const auto space = o.labels == 5 ? LabelSpace::five_class() : LabelSpace::three_class();
        if (o.labels != 3 && o.labels != 5) throw Error(ErrorCode::InvalidConfig, "--labels must be 3 or 5");
        PipelineConfig{o.n_agents, o.ibc_index}.validate();
        const auto script = o.script_kind == "uniform" ? fixtures::uniform_script(o.n_agents, o.ibc_index, space)
                                                       : fixtures::converging_script(o.n_agents, o.ibc_index, space);
        std::cout << script.to_jsonl();
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return kExitConfigInvalid;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent sequential sentiment inference with an informal dialogue round"};
    app.set_config("--config", "", "flat key=value file; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    app.add_option("--system", o.systems, "systems to run: single, kcs, kcs_ibc")->delimiter(',');
    app.add_option("--dataset", o.datasets, "sst5, tweeteval, financial_phrasebank, optionally NAME=PATH")
        ->delimiter(',');
    app.add_option("--data-dir", o.data_dir, "directory holding the standard dataset files");
    app.add_option("--fpb-agreement", o.fpb_agreement, "Financial PhraseBank agreement tier: 50, 66, 75, all");
    app.add_option("--sst5-split", o.sst5_split, "SST5 split file to read");
    app.add_option("--n-agents", o.n_agents, "number of circulating agents N");
    app.add_option("--ibc-index", o.ibc_index, "step m before which the informal session runs");
    app.add_option("--sample-size", o.sample_size, "instances sampled per dataset");
    app.add_option("--seed", o.seed, "sampling seed");
    app.add_option("--backend-url", o.backend_url, "OpenAI-compatible base URL (overrides KAIRANBAN_BASE_URL)");
    app.add_option("--api-key", o.api_key, "API key (overrides KAIRANBAN_API_KEY)");
    app.add_option("--model", o.model, "model name sent to the backend");
    app.add_option("--mock-script", o.mock_script, "JSON-lines script replayed instead of calling a model");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--finalize", o.finalize, "judge or last_step")->check(CLI::IsMember({"judge", "last_step"}));
    app.add_option("--brier", o.brier, "mean or sum")->check(CLI::IsMember({"mean", "sum"}));
    app.add_option("--macro-absent", o.macro_absent, "zero or skip")->check(CLI::IsMember({"zero", "skip"}));
    app.add_flag("--exclude-degraded", o.exclude_degraded, "leave degraded instances out of the metrics");
    app.add_option("--templates", o.templates, "directory with kcs.txt, ibc.txt, single.txt, judge.txt");
    app.add_option("--workers", o.workers, "concurrent instance pipelines / in-flight requests");
    app.add_option("--max-tokens", o.max_tokens, "max_tokens per request");
    app.add_option("--kind", o.script_kind, "make-script: converging or uniform")
        ->check(CLI::IsMember({"converging", "uniform"}));
    app.add_option("--labels", o.labels, "make-script: label count, 3 or 5");

    auto* run = app.add_subcommand("run", "run the selected system x dataset grid");
    auto* report = app.add_subcommand("report", "recompute metrics from stored transcripts");
    auto* validate = app.add_subcommand("validate-config", "check a configuration without calling a backend");
    auto* make_script = app.add_subcommand("make-script", "print a fixture script as JSON lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigInvalid;
    }

    try {
        if (run->parsed()) return cmd_run(o);
        if (report->parsed()) return cmd_report(o);
        if (validate->parsed()) return cmd_validate(o);
        if (make_script->parsed()) return cmd_make_script(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCellFailed;
    }
    return kExitConfigInvalid;
}
