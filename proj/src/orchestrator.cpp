#include "kairanban/orchestrator.hpp"

#include <fmt/format.h>

#include "kairanban/text.hpp"

namespace kairanban {

using nlohmann::json;

std::string_view to_string(SystemKind s) {
    switch (s) {
        case SystemKind::Single: return "single";
        case SystemKind::Kcs: return "kcs";
        case SystemKind::KcsIbc: return "kcs_ibc";
    }
    return "?";
}

std::string_view display_name(SystemKind s) {
    switch (s) {
        case SystemKind::Single: return "single";
        case SystemKind::Kcs: return "KCS";
        case SystemKind::KcsIbc: return "KCS+IBC";
    }
    return "?";
}

SystemKind parse_system(std::string_view s) {
    const auto v = text::to_lower(text::trim(s));
    if (v == "single") return SystemKind::Single;
    if (v == "kcs") return SystemKind::Kcs;
    if (v == "kcs_ibc" || v == "kcs+ibc") return SystemKind::KcsIbc;
    throw Error(ErrorCode::InvalidConfig, "unknown system '" + std::string(s) + "'");
}

std::string_view to_string(FinalizeMode f) { return f == FinalizeMode::Judge ? "judge" : "last_step"; }

FinalizeMode parse_finalize(std::string_view s) {
    if (s == "judge") return FinalizeMode::Judge;
    if (s == "last_step") return FinalizeMode::LastStep;
    throw Error(ErrorCode::InvalidConfig, "unknown finalize mode '" + std::string(s) + "'");
}

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::Kcs: return "kcs";
        case Phase::Ibc: return "ibc";
        case Phase::Judge: return "judge";
        case Phase::Single: return "single";
    }
    return "?";
}

Phase parse_phase(std::string_view s) {
    if (s == "kcs") return Phase::Kcs;
    if (s == "ibc") return Phase::Ibc;
    if (s == "judge") return Phase::Judge;
    if (s == "single") return Phase::Single;
    throw Error(ErrorCode::ParseFailure, "unknown phase '" + std::string(s) + "'");
}

void PipelineConfig::validate() const {
    if (n_agents < 1) throw Error(ErrorCode::InvalidConfig, "n_agents must be at least 1");
    if (ibc_index < 1 || ibc_index > n_agents) {
        throw Error(ErrorCode::InvalidConfig,
                    fmt::format("ibc_index must lie in [1, {}], got {}", n_agents, ibc_index));
    }
    if (max_tokens <= 0) throw Error(ErrorCode::InvalidConfig, "max_tokens must be positive");
    if (temperature < 0.0) throw Error(ErrorCode::InvalidConfig, "temperature must be non-negative");
}

bool Transcript::degraded_any() const noexcept {
    for (const auto& c : calls) {
        if (c.degraded) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kNoComment = "(no comment)";

bool recoverable(ErrorCode code) {
    switch (code) {
        case ErrorCode::ParseFailure:
        case ErrorCode::LabelMismatch:
        case ErrorCode::NonNumeric:
        case ErrorCode::AllZero:
        case ErrorCode::NegativeEntry:
        case ErrorCode::InvalidDistribution:
            return true;
        default:
            return false;
    }
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, Backend& backend, const TemplateSet& templates)
    : config_(std::move(config)), backend_(backend), templates_(templates) {
    config_.validate();
}

CompletionResponse Pipeline::call(Phase phase, int agent_index, const Prompt& prompt) const {
    CompletionRequest req;
    req.model = config_.model;
    req.messages = prompt;
    req.temperature = config_.temperature;
    req.max_tokens = config_.max_tokens;
    req.tag = RequestTag{std::string(to_string(phase)), agent_index};
    return backend_.complete(req);
}

Pipeline::DistributionCall Pipeline::call_for_distribution(Phase phase, int agent_index, const Prompt& prompt,
                                                           CallLog& log) const {
    Prompt current = prompt;
    for (int round = 0; round < 2; ++round) {
        const auto resp = call(phase, agent_index, current);
        CallRecord rec{phase, agent_index, current, resp.text, nullptr, false, round > 0, resp.latency_ms,
                       resp.attempt_count};
        try {
            auto parsed = parse_agent_output(resp.text, config_.space);
            auto dist = normalize(parsed.raw_probs);
            rec.parsed = json{{"distribution", dist.entries()}};
            if (phase == Phase::Kcs) {
                rec.parsed["analysis"] = parsed.analysis;
                rec.parsed["reasoning"] = parsed.reasoning;
            }
            log.push_back(std::move(rec));
            return {std::move(parsed), std::move(dist)};
        } catch (const Error& e) {
            if (!recoverable(e.code())) throw;
            if (round == 1) rec.degraded = true;
            log.push_back(std::move(rec));
        }
        current = with_reask(prompt);
    }
    return {std::nullopt, make_uniform(config_.space)};
}

Document Pipeline::init_document(std::string_view input_text) const {
    if (text::trim(input_text).empty()) throw Error(ErrorCode::EmptyInstance, "instance text is empty");
    Document doc;
    doc.input_text = std::string(input_text);
    doc.steps.push_back(AgentStepRecord{0, std::string(kSentinelAnalysis), std::string(kSentinelReasoning),
                                        ProbabilityVector::placeholder(config_.space.k()), false});
    return doc;
}

Document Pipeline::kcs_step(const Document& doc, int agent_index, CallLog& log) const {
    if (agent_index < 1 || agent_index > config_.n_agents) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("agent index {} outside 1..{}", agent_index,
                                                          config_.n_agents));
    }
    if (doc.has_step(agent_index)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("step {} already exists", agent_index));
    }
    const auto prompt = render_kcs_prompt(doc, agent_index, config_.n_agents, config_.space, templates_);
    auto result = call_for_distribution(Phase::Kcs, agent_index, prompt, log);

    Document next = doc;
    AgentStepRecord rec;
    rec.agent_index = agent_index;
    rec.distribution = std::move(result.distribution);
    if (result.parsed) {
        rec.analysis = std::move(result.parsed->analysis);
        rec.reasoning = std::move(result.parsed->reasoning);
    } else {
        rec.analysis = std::string(kDegradedAnalysis);
        rec.reasoning = std::string(kDegradedAnalysis);
        rec.degraded = true;
    }
    next.steps.push_back(std::move(rec));
    return next;
}

IbcInputs Pipeline::ibc_inputs(const Document& doc, int j, const std::vector<Comment>& so_far) const {
    const int m = config_.ibc_index;
    const auto analysis = [&doc](int idx) {
        if (!doc.has_step(idx)) {
            throw Error(ErrorCode::MissingAnalysis, fmt::format("IBC needs the analysis of agent {}", idx));
        }
        return doc.step(idx).analysis;
    };
    IbcInputs in;
    in.agent_index = j;
    in.n_agents = config_.n_agents;
    if (j == 0) {
        in.own_analysis = analysis(0);
        return in;
    }
    // Comments of agents k < j; the comment being written is not yet available.
    in.prior_comments = so_far;
    if (j < m) {
        in.own_analysis = analysis(j);
        in.previous_analysis = analysis(j - 1);
    } else if (j == m) {
        in.previous_analysis = analysis(m - 1);
    }
    return in;
}

Document Pipeline::ibc_session(const Document& doc, CallLog& log) const {
    const int m = config_.ibc_index;
    if (!doc.comments.empty()) throw Error(ErrorCode::InvalidConfig, "the IBC session runs once per document");
    for (int i = 0; i < m; ++i) {
        if (!doc.has_step(i)) {
            throw Error(ErrorCode::MissingAnalysis, fmt::format("IBC at m={} needs step {}", m, i));
        }
    }
    if (doc.has_step(m)) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("IBC must run before step {}", m));
    }

    std::vector<Comment> comments;
    for (int j = 0; j <= config_.n_agents; ++j) {
        const auto inputs = ibc_inputs(doc, j, comments);
        const auto prompt = render_ibc_prompt(doc.input_text, inputs, config_.space, templates_);
        const auto resp = call(Phase::Ibc, j, prompt);
        std::string said(text::trim(resp.text));
        const bool degraded = said.empty();
        if (degraded) said = std::string(kNoComment);
        log.push_back(CallRecord{Phase::Ibc, j, prompt, resp.text, json{{"comment", said}}, degraded, false,
                                 resp.latency_ms, resp.attempt_count});
        comments.push_back(Comment{j, std::move(said)});
    }

    Document next = doc;
    next.comments.insert(next.comments.end(), comments.begin(), comments.end());
    return next;
}

ProbabilityVector Pipeline::judge_finalize(const Document& doc, CallLog& log) const {
    const auto prompt = render_judge_prompt(doc, config_.n_agents, config_.space, templates_);
    return call_for_distribution(Phase::Judge, 0, prompt, log).distribution;
}

Transcript Pipeline::run_single(std::string_view input_text, std::string instance_id) const {
    if (config_.system != SystemKind::Single) {
        throw Error(ErrorCode::InvalidConfig, "run_single needs system=single");
    }
    if (text::trim(input_text).empty()) throw Error(ErrorCode::EmptyInstance, "instance text is empty");
    Transcript t;
    t.instance_id = std::move(instance_id);
    t.config = config_;
    t.document.input_text = std::string(input_text);
    const auto prompt = render_single_prompt(t.document.input_text, config_.space, templates_);
    t.final_distribution = call_for_distribution(Phase::Single, 0, prompt, t.calls).distribution;
    t.per_step_distributions = {t.final_distribution};
    return t;
}

Transcript Pipeline::run_pipeline(std::string_view input_text, std::string instance_id) const {
    if (config_.system == SystemKind::Single) {
        throw Error(ErrorCode::InvalidConfig, "run_pipeline needs system=kcs or kcs_ibc");
    }
    Transcript t;
    t.instance_id = std::move(instance_id);
    t.config = config_;

    Document doc = init_document(input_text);
    const int n = config_.n_agents;
    if (config_.system == SystemKind::Kcs) {
        for (int i = 1; i <= n; ++i) doc = kcs_step(doc, i, t.calls);
    } else {
        const int m = config_.ibc_index;
        for (int i = 1; i < m; ++i) doc = kcs_step(doc, i, t.calls);
        doc = ibc_session(doc, t.calls);
        for (int i = m; i <= n; ++i) doc = kcs_step(doc, i, t.calls);
    }

    for (int i = 1; i <= n; ++i) t.per_step_distributions.push_back(doc.step(i).distribution);
    t.final_distribution = config_.finalize == FinalizeMode::Judge ? judge_finalize(doc, t.calls)
                                                                   : doc.step(n).distribution;
    t.document = std::move(doc);
    return t;
}

Transcript Pipeline::run(std::string_view input_text, std::string instance_id) const {
    return config_.system == SystemKind::Single ? run_single(input_text, std::move(instance_id))
                                                : run_pipeline(input_text, std::move(instance_id));
}

}  // namespace kairanban
