#include "kairanban/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "kairanban/text.hpp"

namespace kairanban {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
    if (systems.empty()) throw Error(ErrorCode::InvalidConfig, "no systems selected");
    if (datasets.empty()) throw Error(ErrorCode::InvalidConfig, "no datasets selected");
    if (sample_size == 0) throw Error(ErrorCode::InvalidConfig, "sample size must be positive");
    if (workers < 1) throw Error(ErrorCode::InvalidConfig, "workers must be at least 1");
    if (out_dir.empty()) throw Error(ErrorCode::InvalidConfig, "output directory is empty");
    std::set<DatasetName> seen_datasets;
    for (const auto& d : datasets) {
        if (d.path.empty()) throw Error(ErrorCode::InvalidConfig, fmt::format("{} has no path", to_string(d.name)));
        if (d.format == DatasetFormat::Paired && d.label_path.empty()) {
            throw Error(ErrorCode::InvalidConfig, fmt::format("{} needs a label file", to_string(d.name)));
        }
        if (!seen_datasets.insert(d.name).second) {
            throw Error(ErrorCode::InvalidConfig, fmt::format("{} selected twice", to_string(d.name)));
        }
    }
    for (auto s : systems) pipeline_config(s, LabelSpace::three_class()).validate();
}

PipelineConfig RunConfig::pipeline_config(SystemKind system, const LabelSpace& space) const {
    PipelineConfig p;
    p.n_agents = n_agents;
    p.ibc_index = ibc_index;
    p.system = system;
    p.space = space;
    p.finalize = finalize;
    p.model = model;
    p.temperature = 0.0;
    p.max_tokens = max_tokens;
    return p;
}

json to_json(const RunConfig& cfg) {
    json systems = json::array();
    for (auto s : cfg.systems) systems.push_back(to_string(s));
    json datasets = json::array();
    for (const auto& d : cfg.datasets) {
        json j = {{"name", to_string(d.name)}, {"path", d.path}, {"format", to_string(d.format)}};
        if (!d.label_path.empty()) j["label_path"] = d.label_path;
        datasets.push_back(std::move(j));
    }
    return {{"systems", systems},
            {"datasets", datasets},
            {"n_agents", cfg.n_agents},
            {"ibc_index", cfg.ibc_index},
            {"sample_size", cfg.sample_size},
            {"seed", cfg.seed},
            {"model", cfg.model},
            {"temperature", 0.0},
            {"max_tokens", cfg.max_tokens},
            {"finalize", to_string(cfg.finalize)},
            {"brier", cfg.metrics.brier == BrierConvention::Mean ? "mean" : "sum"},
            {"macro_absent", cfg.metrics.macro_absent == AbsentClassPolicy::Zero ? "zero" : "skip"},
            {"exclude_degraded", cfg.metrics.exclude_degraded},
            {"log_loss_clip", kLogLossClip}};
}

bool RunSummary::any_failed() const noexcept {
    return std::any_of(cells.begin(), cells.end(), [](const CellResult& c) { return !c.completed; });
}

const CellResult* RunSummary::find(SystemKind s, DatasetName d) const noexcept {
    for (const auto& c : cells) {
        if (c.system == s && c.dataset == d) return &c;
    }
    return nullptr;
}

namespace {

json step_stats_json(const StepStats& st) {
    json out = json::array();
    for (const auto& s : st.steps) {
        out.push_back({{"step", s.step},
                       {"mean_entropy", s.mean_entropy},
                       {"delta_entropy", s.delta_entropy},
                       {"se_entropy", s.se_entropy},
                       {"mean_variance", s.mean_variance},
                       {"delta_variance", s.delta_variance},
                       {"se_variance", s.se_variance}});
    }
    return out;
}

std::string_view dataset_title(DatasetName d) {
    switch (d) {
        case DatasetName::FinancialPhraseBank: return "Financial Phrasebank";
        case DatasetName::Sst5: return "SST5";
        case DatasetName::TweetEval: return "Tweet Eval";
    }
    return "?";
}

constexpr SystemKind kAllSystems[] = {SystemKind::Single, SystemKind::Kcs, SystemKind::KcsIbc};
constexpr DatasetName kAllDatasets[] = {DatasetName::FinancialPhraseBank, DatasetName::Sst5,
                                        DatasetName::TweetEval};

}  // namespace

json to_json(const RunSummary& s) {
    json cells = json::array();
    for (const auto& c : s.cells) {
        json j = {{"system", to_string(c.system)},
                  {"dataset", to_string(c.dataset)},
                  {"completed", c.completed},
                  {"error", c.error},
                  {"n_instances", c.n_instances},
                  {"degraded_count", c.degraded_count}};
        if (c.completed) {
            j["macro_f1"] = c.macro_f1;
            j["micro_f1"] = c.micro_f1;
            j["logloss"] = c.logloss;
            j["brier"] = c.brier;
            if (c.step_stats) j["step_stats"] = step_stats_json(*c.step_stats);
        }
        cells.push_back(std::move(j));
    }
    json cross = json::object();
    for (const auto& [sys, st] : s.cross_dataset) cross[std::string(to_string(sys))] = step_stats_json(st);
    return {{"config", s.config}, {"cells", cells}, {"cross_dataset", cross}};
}

// ---------------------------------------------------------------------------
// Scoring

CellResult score_cell(SystemKind system, DatasetName dataset, const std::vector<Transcript>& transcripts,
                      const MetricOptions& options) {
    CellResult cell;
    cell.system = system;
    cell.dataset = dataset;
    if (transcripts.empty()) throw Error(ErrorCode::EmptyRecords, "cell has no transcripts");

    const auto& cfg = transcripts.front().config;
    std::vector<EvalRecord> records;
    for (const auto& t : transcripts) {
        if (!t.gold_label_index) {
            throw Error(ErrorCode::EmptyRecords, "transcript " + t.instance_id + " has no gold label");
        }
        const bool degraded = t.degraded_any();
        if (degraded) ++cell.degraded_count;
        if (degraded && options.exclude_degraded) continue;
        records.push_back(EvalRecord{t.instance_id, *t.gold_label_index, t.final_distribution,
                                     t.per_step_distributions, degraded});
    }
    cell.n_instances = transcripts.size();
    cell.macro_f1 = macro_f1(records, cfg.space, options.macro_absent);
    cell.micro_f1 = micro_f1(records, cfg.space);
    cell.logloss = log_loss(records);
    cell.brier = brier(records, options.brier);
    if (system != SystemKind::Single) cell.step_stats = step_stats(records, cfg.n_agents);
    cell.completed = true;
    return cell;
}

namespace {

void fill_cross_dataset(RunSummary& summary) {
    for (auto sys : {SystemKind::Kcs, SystemKind::KcsIbc}) {
        std::vector<StepStats> per_dataset;
        for (const auto& c : summary.cells) {
            if (c.system == sys && c.completed && c.step_stats) per_dataset.push_back(*c.step_stats);
        }
        if (!per_dataset.empty()) summary.cross_dataset[sys] = cross_dataset_average(per_dataset);
    }
}

// ---------------------------------------------------------------------------
// Cell execution

CellResult run_cell(const RunConfig& cfg, SystemKind system, const DatasetSpec& ds, Backend& backend,
                    const TemplateSet& templates) {
    CellResult cell;
    cell.system = system;
    cell.dataset = ds.name;
    try {
        const auto sample = sample_instances(load_dataset(ds), cfg.sample_size, cfg.seed);
        const auto pcfg = cfg.pipeline_config(system, ds.space);
        const Pipeline pipeline(pcfg, backend, templates);
        const auto path = transcript_path(cfg.out_dir, system, ds.name);

        std::map<std::string, Transcript> existing;
        if (fs::exists(path)) {
            for (auto& t : read_transcripts(path)) {
                if (!(t.config == pcfg)) {
                    throw Error(ErrorCode::InvalidConfig,
                                path.string() + " was produced with a different pipeline configuration");
                }
                existing.emplace(t.instance_id, std::move(t));
            }
        }

        std::vector<std::optional<Transcript>> results(sample.size());
        std::vector<std::size_t> pending;
        for (std::size_t i = 0; i < sample.size(); ++i) {
            if (auto it = existing.find(sample[i].id); it != existing.end()) {
                results[i] = std::move(it->second);
            } else {
                pending.push_back(i);
            }
        }

        fs::create_directories(path.parent_path());
        std::ofstream append(path, std::ios::app | std::ios::binary);
        if (!append) throw Error(ErrorCode::IoError, "cannot write " + path.string());

        std::mutex mu;
        std::string first_error;
        std::atomic<std::size_t> next{0};
        std::atomic<bool> stop{false};
        const auto worker = [&] {
            while (!stop.load()) {
                const auto slot = next.fetch_add(1);
                if (slot >= pending.size()) return;
                const auto i = pending[slot];
                try {
                    auto t = pipeline.run(sample[i].text, sample[i].id);
                    t.gold_label_index = sample[i].gold_label_index;
                    const auto line = to_json(t).dump();
                    std::lock_guard lock(mu);
                    append << line << '\n';
                    append.flush();
                    results[i] = std::move(t);
                } catch (const std::exception& e) {
                    std::lock_guard lock(mu);
                    if (first_error.empty()) first_error = fmt::format("{}: {}", sample[i].id, e.what());
                    stop = true;
                }
            }
        };
        const auto n_workers = static_cast<std::size_t>(
            std::clamp(std::min(cfg.workers, backend.max_concurrency()), 1, 1024));
        if (n_workers <= 1 || pending.size() <= 1) {
            worker();
        } else {
            std::vector<std::jthread> threads;
            for (std::size_t w = 0; w < std::min(n_workers, pending.size()); ++w) threads.emplace_back(worker);
        }
        append.close();

        // Canonical order: one line per sampled instance, in draw order.
        std::vector<Transcript> done;
        for (auto& r : results) {
            if (r) done.push_back(std::move(*r));
        }
        write_transcripts(path, done);
        if (!first_error.empty()) throw Error(ErrorCode::TransportError, first_error);

        cell = score_cell(system, ds.name, done, cfg.metrics);
        cell.new_instances = pending.size();
    } catch (const std::exception& e) {
        cell.completed = false;
        cell.error = e.what();
    }
    return cell;
}

}  // namespace

RunSummary run_experiment(const RunConfig& cfg, Backend& backend) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const TemplateSet templates =
        cfg.templates_dir ? TemplateSet::load_dir(*cfg.templates_dir) : TemplateSet::defaults();

    RunSummary summary;
    summary.config = to_json(cfg);
    for (const auto& ds : cfg.datasets) {
        for (auto sys : cfg.systems) summary.cells.push_back(run_cell(cfg, sys, ds, backend, templates));
    }
    fill_cross_dataset(summary);
    write_outputs(cfg.out_dir, summary);
    summary.wall_clock_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

RunSummary report_from_transcripts(const fs::path& out_dir, const MetricOptions& options) {
    RunSummary summary;
    const auto summary_json = out_dir / "summary.json";
    if (fs::exists(summary_json)) {
        try {
            summary.config = json::parse(text::read_file(summary_json.string())).at("config");
        } catch (const json::exception&) {
            // a damaged summary only loses the config echo
        }
    }
    for (auto ds : kAllDatasets) {
        for (auto sys : kAllSystems) {
            const auto path = transcript_path(out_dir, sys, ds);
            if (!fs::exists(path)) continue;
            try {
                summary.cells.push_back(score_cell(sys, ds, read_transcripts(path), options));
            } catch (const std::exception& e) {
                CellResult c;
                c.system = sys;
                c.dataset = ds;
                c.error = e.what();
                summary.cells.push_back(std::move(c));
            }
        }
    }
    fill_cross_dataset(summary);
    return summary;
}

// ---------------------------------------------------------------------------
// Persistence

fs::path transcript_path(const fs::path& dir, SystemKind s, DatasetName d) {
    return dir / "transcripts" / fmt::format("{}__{}.jsonl", to_string(s), to_string(d));
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        out << content;
        if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

void write_transcripts(const fs::path& path, const std::vector<Transcript>& transcripts) {
    std::string content;
    for (const auto& t : transcripts) {
        content += to_json(t).dump();
        content += '\n';
    }
    write_file(path, content);
}

std::vector<Transcript> read_transcripts(const fs::path& path) {
    const auto lines = text::split_lines(text::read_file(path.string()));
    std::vector<Transcript> out;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::parse_error&) {
            // A torn final line from an interrupted append is dropped; anything else is corruption.
            if (i + 1 == lines.size()) break;
            throw Error(ErrorCode::MalformedRow, fmt::format("{} line {} is not JSON", path.string(), i + 1));
        }
        auto t = transcript_from_json(j);
        if (ids.insert(t.instance_id).second) out.push_back(std::move(t));
    }
    return out;
}

std::string format_metric_table(const RunSummary& summary, DatasetName dataset) {
    std::string out = fmt::format("{}\n{:<9}{:>10}{:>10}{:>10}{:>10}\n", dataset_title(dataset), "model",
                                  "macro-F1", "micro-F1", "logloss", "brier");
    for (auto sys : kAllSystems) {
        const auto* c = summary.find(sys, dataset);
        if (!c) continue;
        if (c->completed) {
            out += fmt::format("{:<9}{:>10.4f}{:>10.4f}{:>10.4f}{:>10.4f}\n", display_name(sys), c->macro_f1,
                               c->micro_f1, c->logloss, c->brier);
        } else {
            out += fmt::format("{:<9}  failed: {}\n", display_name(sys), c->error);
        }
    }
    return out;
}

std::string format_step_table(const std::map<SystemKind, StepStats>& stats, bool entropy) {
    std::string out = fmt::format("{:<7}", "Agent");
    for (const auto& [sys, st] : stats) out += fmt::format("{:>18}", display_name(sys));
    out += '\n';
    std::size_t n = 0;
    for (const auto& [sys, st] : stats) n = std::max(n, st.steps.size());
    for (std::size_t i = 0; i < n; ++i) {
        out += fmt::format("{:<7}", i + 1);
        for (const auto& [sys, st] : stats) {
            if (i >= st.steps.size()) {
                out += fmt::format("{:>18}", "-");
                continue;
            }
            const auto& s = st.steps[i];
            out += fmt::format("{:>18}", entropy ? format_value_delta(s.mean_entropy, s.delta_entropy)
                                                 : format_value_delta(s.mean_variance, s.delta_variance));
        }
        out += '\n';
    }
    return out;
}

void write_summary(const fs::path& dir, const RunSummary& summary) {
    write_file(dir / "summary.json", to_json(summary).dump(2) + "\n");

    std::string txt;
    std::set<DatasetName> datasets;
    for (const auto& c : summary.cells) datasets.insert(c.dataset);
    for (auto ds : kAllDatasets) {
        if (!datasets.count(ds)) continue;
        std::string csv = std::string(kSummaryCsvHeader) + "\n";
        for (auto sys : kAllSystems) {
            const auto* c = summary.find(sys, ds);
            if (!c || !c->completed) continue;
            csv += fmt::format("{},{},{},{},{}\n", display_name(sys), num(c->macro_f1), num(c->micro_f1),
                               num(c->logloss), num(c->brier));
        }
        write_file(dir / fmt::format("summary_{}.csv", to_string(ds)), csv);
        txt += format_metric_table(summary, ds);
        txt += '\n';
    }

    for (auto ds : kAllDatasets) {
        std::map<SystemKind, StepStats> per;
        for (const auto& c : summary.cells) {
            if (c.dataset == ds && c.completed && c.step_stats) per[c.system] = *c.step_stats;
        }
        if (per.empty()) continue;
        txt += fmt::format("Changes in entropy ({})\n{}\n", dataset_title(ds), format_step_table(per, true));
        txt += fmt::format("Changes in variance ({})\n{}\n", dataset_title(ds), format_step_table(per, false));
    }
    if (!summary.cross_dataset.empty()) {
        txt += fmt::format("Changes in entropy (average over datasets)\n{}\n",
                           format_step_table(summary.cross_dataset, true));
        txt += fmt::format("Changes in variance (average over datasets)\n{}\n",
                           format_step_table(summary.cross_dataset, false));
    }
    for (const auto& c : summary.cells) {
        if (c.completed && c.degraded_count > 0) {
            txt += fmt::format("{} / {}: {} of {} instances had degraded steps\n", display_name(c.system),
                               dataset_title(c.dataset), c.degraded_count, c.n_instances);
        }
    }
    write_file(dir / "summary.txt", txt);
}

void emit_plot_data(const fs::path& dir, const std::string& name, const std::map<SystemKind, StepStats>& stats) {
    std::string csv = std::string(kPlotCsvHeader) + "\n";
    for (const auto& [sys, st] : stats) {
        for (const auto& s : st.steps) {
            csv += fmt::format("{},{},{},{},{},{}\n", s.step, num(s.mean_entropy), num(s.se_entropy),
                               num(s.mean_variance), num(s.se_variance), to_string(sys));
        }
    }
    write_file(dir / fmt::format("plot_{}.csv", name), csv);
}

void write_outputs(const fs::path& dir, const RunSummary& summary) {
    write_summary(dir, summary);
    for (auto ds : kAllDatasets) {
        std::map<SystemKind, StepStats> per;
        for (const auto& c : summary.cells) {
            if (c.dataset == ds && c.completed && c.step_stats) per[c.system] = *c.step_stats;
        }
        if (!per.empty()) emit_plot_data(dir, std::string(to_string(ds)), per);
    }
    if (!summary.cross_dataset.empty()) emit_plot_data(dir, "average", summary.cross_dataset);
}

}  // namespace kairanban
