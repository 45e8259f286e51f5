#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "kairanban/backend.hpp"
#include "kairanban/core.hpp"
#include "kairanban/prompting.hpp"

namespace kairanban {

enum class SystemKind { Single, Kcs, KcsIbc };
enum class FinalizeMode { Judge, LastStep };

std::string_view to_string(SystemKind s);        // single | kcs | kcs_ibc
std::string_view display_name(SystemKind s);     // single | KCS | KCS+IBC
SystemKind parse_system(std::string_view s);     // InvalidConfig on unknown names
std::string_view to_string(FinalizeMode f);      // judge | last_step
FinalizeMode parse_finalize(std::string_view s);

struct PipelineConfig {
    int n_agents = 6;   // N
    int ibc_index = 3;  // m: the IBC session runs after step m-1, before step m
    SystemKind system = SystemKind::KcsIbc;
    LabelSpace space = LabelSpace::three_class();
    FinalizeMode finalize = FinalizeMode::Judge;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 1024;

    /// Throws InvalidConfig unless 1 <= ibc_index <= n_agents and max_tokens > 0.
    void validate() const;

    bool operator==(const PipelineConfig&) const = default;
};

enum class Phase { Kcs, Ibc, Judge, Single };
std::string_view to_string(Phase p);
Phase parse_phase(std::string_view s);

/// One backend call as seen by the pipeline. A re-ask after a parse failure
/// is a separate record with `reask` set.
struct CallRecord {
    Phase phase = Phase::Kcs;
    int agent_index = 0;
    Prompt prompt;
    std::string raw_response;
    nlohmann::json parsed;  // null when the reply did not parse
    bool degraded = false;
    bool reask = false;
    std::int64_t latency_ms = 0;
    int attempt_count = 1;

    bool operator==(const CallRecord&) const = default;
};

using CallLog = std::vector<CallRecord>;

struct Transcript {
    std::string instance_id;
    std::optional<int> gold_label_index;
    PipelineConfig config;
    Document document;
    CallLog calls;
    ProbabilityVector final_distribution;
    std::vector<ProbabilityVector> per_step_distributions;

    bool degraded_any() const noexcept;
    bool operator==(const Transcript&) const = default;
};

nlohmann::json to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);

/// Runs the three systems over one instance. Each step takes the document by
/// const reference and returns the extended copy, so earlier steps and
/// comments are never rewritten.
class Pipeline {
public:
    Pipeline(PipelineConfig config, Backend& backend, const TemplateSet& templates = TemplateSet::defaults());

    const PipelineConfig& config() const noexcept { return config_; }

    /// D_0: sentinel analysis and hypothesis, all-zero placeholder distribution.
    Document init_document(std::string_view input_text) const;

    Document kcs_step(const Document& doc, int agent_index, CallLog& log) const;

    /// Requires steps 0..m-1 and no step m yet. Appends N+1 comments.
    Document ibc_session(const Document& doc, CallLog& log) const;

    /// The inputs agent j sees during the session, given the comments so far.
    IbcInputs ibc_inputs(const Document& doc, int j, const std::vector<Comment>& so_far) const;

    ProbabilityVector judge_finalize(const Document& doc, CallLog& log) const;

    Transcript run_single(std::string_view input_text, std::string instance_id = {}) const;
    Transcript run_pipeline(std::string_view input_text, std::string instance_id = {}) const;
    /// Dispatches on config().system.
    Transcript run(std::string_view input_text, std::string instance_id = {}) const;

private:
    struct DistributionCall {
        std::optional<ParsedAgentOutput> parsed;
        ProbabilityVector distribution;
    };

    DistributionCall call_for_distribution(Phase phase, int agent_index, const Prompt& prompt,
                                           CallLog& log) const;
    CompletionResponse call(Phase phase, int agent_index, const Prompt& prompt) const;

    PipelineConfig config_;
    Backend& backend_;
    TemplateSet templates_;
};

}  // namespace kairanban
