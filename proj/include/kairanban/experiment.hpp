#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kairanban/backend.hpp"
#include "kairanban/datasets.hpp"
#include "kairanban/metrics.hpp"
#include "kairanban/orchestrator.hpp"

namespace kairanban {

struct MetricOptions {
    BrierConvention brier = BrierConvention::Mean;
    AbsentClassPolicy macro_absent = AbsentClassPolicy::Zero;
    bool exclude_degraded = false;

    bool operator==(const MetricOptions&) const = default;
};

struct RunConfig {
    std::vector<SystemKind> systems{SystemKind::Single, SystemKind::Kcs, SystemKind::KcsIbc};
    std::vector<DatasetSpec> datasets;
    int n_agents = 6;
    int ibc_index = 3;
    std::size_t sample_size = 500;
    std::uint64_t seed = 42;
    std::string model;
    int max_tokens = 1024;
    FinalizeMode finalize = FinalizeMode::Judge;
    MetricOptions metrics;
    std::filesystem::path out_dir = "out";
    std::optional<std::string> templates_dir;
    int workers = 4;

    /// Throws InvalidConfig. Runs before any backend call.
    void validate() const;
    PipelineConfig pipeline_config(SystemKind system, const LabelSpace& space) const;
};

nlohmann::json to_json(const RunConfig& cfg);

struct CellResult {
    SystemKind system = SystemKind::Single;
    DatasetName dataset = DatasetName::TweetEval;
    bool completed = false;
    std::string error;
    std::size_t n_instances = 0;
    std::size_t degraded_count = 0;
    double macro_f1 = 0.0;
    double micro_f1 = 0.0;
    double logloss = 0.0;
    double brier = 0.0;
    std::optional<StepStats> step_stats;  // multi-agent systems only
    // Not persisted: these differ between a fresh and a resumed run.
    std::size_t new_instances = 0;
};

struct RunSummary {
    nlohmann::json config;
    std::vector<CellResult> cells;
    std::map<SystemKind, StepStats> cross_dataset;
    double wall_clock_ms = 0.0;  // not persisted

    bool any_failed() const noexcept;
    const CellResult* find(SystemKind s, DatasetName d) const noexcept;
};

nlohmann::json to_json(const RunSummary& s);

/// Scores one (system, dataset) cell from its transcripts.
CellResult score_cell(SystemKind system, DatasetName dataset, const std::vector<Transcript>& transcripts,
                      const MetricOptions& options);

/// Runs every system x dataset cell. A failing cell is recorded in the summary
/// and does not stop the others. Instances whose transcript already exists in
/// the output directory are not re-run.
RunSummary run_experiment(const RunConfig& cfg, Backend& backend);

/// Recomputes the summary from stored transcripts without calling a backend.
RunSummary report_from_transcripts(const std::filesystem::path& out_dir, const MetricOptions& options);

std::filesystem::path transcript_path(const std::filesystem::path& dir, SystemKind s, DatasetName d);
void write_transcripts(const std::filesystem::path& path, const std::vector<Transcript>& transcripts);
std::vector<Transcript> read_transcripts(const std::filesystem::path& path);

/// summary.json, summary.txt and one summary_<dataset>.csv per dataset.
void write_summary(const std::filesystem::path& dir, const RunSummary& summary);
/// plot_<name>.csv: step,mean_entropy,se_entropy,mean_variance,se_variance,system
void emit_plot_data(const std::filesystem::path& dir, const std::string& name,
                    const std::map<SystemKind, StepStats>& stats);

/// write_summary plus plot data per dataset and for the cross-dataset average.
void write_outputs(const std::filesystem::path& dir, const RunSummary& summary);

inline constexpr std::string_view kSummaryCsvHeader = "model,macro_f1,micro_f1,logloss,brier";
inline constexpr std::string_view kPlotCsvHeader = "step,mean_entropy,se_entropy,mean_variance,se_variance,system";

/// Fixed-width metric table for one dataset, one row per system.
std::string format_metric_table(const RunSummary& summary, DatasetName dataset);
/// Per-step table with one "value(+delta)" column per multi-agent system.
std::string format_step_table(const std::map<SystemKind, StepStats>& stats, bool entropy);

}  // namespace kairanban
