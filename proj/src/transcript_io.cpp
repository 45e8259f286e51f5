#include "kairanban/orchestrator.hpp"

namespace kairanban {

using nlohmann::json;

namespace {

json vec_json(const ProbabilityVector& p) { return p.entries(); }

ProbabilityVector vec_from(const json& j) {
    return ProbabilityVector::from_entries(j.get<std::vector<double>>());
}

json config_json(const PipelineConfig& c) {
    return {{"system", to_string(c.system)},
            {"n_agents", c.n_agents},
            {"ibc_index", c.ibc_index},
            {"labels", c.space.labels()},
            {"finalize", to_string(c.finalize)},
            {"model", c.model},
            {"temperature", c.temperature},
            {"max_tokens", c.max_tokens}};
}

PipelineConfig config_from(const json& j) {
    PipelineConfig c;
    c.system = parse_system(j.at("system").get<std::string>());
    c.n_agents = j.at("n_agents").get<int>();
    c.ibc_index = j.at("ibc_index").get<int>();
    c.space = LabelSpace(j.at("labels").get<std::vector<std::string>>());
    c.finalize = parse_finalize(j.at("finalize").get<std::string>());
    c.model = j.at("model").get<std::string>();
    c.temperature = j.at("temperature").get<double>();
    c.max_tokens = j.at("max_tokens").get<int>();
    return c;
}

json prompt_json(const Prompt& p) {
    json out = json::array();
    for (const auto& m : p) out.push_back({{"role", m.role}, {"content", m.content}});
    return out;
}

Prompt prompt_from(const json& j) {
    Prompt p;
    for (const auto& m : j) p.push_back(Message{m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    return p;
}

}  // namespace

json to_json(const Transcript& t) {
    json steps = json::array();
    for (const auto& s : t.document.steps) {
        steps.push_back({{"agent_index", s.agent_index},
                         {"analysis", s.analysis},
                         {"reasoning", s.reasoning},
                         {"distribution", vec_json(s.distribution)},
                         {"placeholder", s.distribution.is_placeholder()},
                         {"degraded", s.degraded}});
    }
    json comments = json::array();
    for (const auto& c : t.document.comments) comments.push_back({{"agent_index", c.agent_index}, {"text", c.text}});

    json calls = json::array();
    for (const auto& c : t.calls) {
        calls.push_back({{"phase", to_string(c.phase)},
                         {"agent_index", c.agent_index},
                         {"prompt", prompt_json(c.prompt)},
                         {"raw_response", c.raw_response},
                         {"parsed", c.parsed},
                         {"degraded", c.degraded},
                         {"reask", c.reask},
                         {"latency_ms", c.latency_ms},
                         {"attempt_count", c.attempt_count}});
    }
    json per_step = json::array();
    for (const auto& p : t.per_step_distributions) per_step.push_back(vec_json(p));

    return {{"instance_id", t.instance_id},
            {"gold_label_index", t.gold_label_index ? json(*t.gold_label_index) : json(nullptr)},
            {"config", config_json(t.config)},
            {"document", {{"input_text", t.document.input_text}, {"steps", steps}, {"comments", comments}}},
            {"calls", calls},
            {"final_distribution", vec_json(t.final_distribution)},
            {"per_step_distributions", per_step}};
}

Transcript transcript_from_json(const json& j) {
    try {
        Transcript t;
        t.instance_id = j.at("instance_id").get<std::string>();
        if (!j.at("gold_label_index").is_null()) t.gold_label_index = j["gold_label_index"].get<int>();
        t.config = config_from(j.at("config"));

        const auto& doc = j.at("document");
        t.document.input_text = doc.at("input_text").get<std::string>();
        for (const auto& s : doc.at("steps")) {
            AgentStepRecord r;
            r.agent_index = s.at("agent_index").get<int>();
            r.analysis = s.at("analysis").get<std::string>();
            r.reasoning = s.at("reasoning").get<std::string>();
            r.distribution = s.at("placeholder").get<bool>() ? ProbabilityVector::placeholder(t.config.space.k())
                                                              : vec_from(s.at("distribution"));
            r.degraded = s.at("degraded").get<bool>();
            t.document.steps.push_back(std::move(r));
        }
        for (const auto& c : doc.at("comments")) {
            t.document.comments.push_back(Comment{c.at("agent_index").get<int>(), c.at("text").get<std::string>()});
        }
        for (const auto& c : j.at("calls")) {
            CallRecord r;
            r.phase = parse_phase(c.at("phase").get<std::string>());
            r.agent_index = c.at("agent_index").get<int>();
            r.prompt = prompt_from(c.at("prompt"));
            r.raw_response = c.at("raw_response").get<std::string>();
            r.parsed = c.at("parsed");
            r.degraded = c.at("degraded").get<bool>();
            r.reask = c.at("reask").get<bool>();
            r.latency_ms = c.at("latency_ms").get<std::int64_t>();
            r.attempt_count = c.at("attempt_count").get<int>();
            t.calls.push_back(std::move(r));
        }
        t.final_distribution = vec_from(j.at("final_distribution"));
        for (const auto& p : j.at("per_step_distributions")) t.per_step_distributions.push_back(vec_from(p));
        return t;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseFailure, std::string("malformed transcript: ") + e.what());
    }
}

}  // namespace kairanban
