#include "kairanban/prompting.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>

#include <fmt/format.h>

#include "default_templates.hpp"
#include "json.hpp"
#include "kairanban/text.hpp"

namespace kairanban {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Template engine

PromptTemplate::PromptTemplate(std::string role_preamble, std::string body_layout)
    : preamble_(std::move(role_preamble)), body_(std::move(body_layout)) {}

PromptTemplate PromptTemplate::parse(const std::string& content) {
    const auto lines = text::split_lines(content);
    std::string preamble;
    std::string body;
    bool in_body = false;
    for (const auto& line : lines) {
        if (!in_body && line == "---") {
            in_body = true;
            continue;
        }
        std::string& target = in_body ? body : preamble;
        target += line;
        target += '\n';
    }
    if (!in_body) throw Error(ErrorCode::TemplateError, "template lacks the '---' separator line");
    while (!preamble.empty() && preamble.back() == '\n') preamble.pop_back();
    while (!body.empty() && body.back() == '\n') body.pop_back();
    return PromptTemplate(std::move(preamble), std::move(body));
}

PromptTemplate PromptTemplate::load(const std::string& path) { return parse(text::read_file(path)); }

namespace {

const std::string& lookup(const PromptTemplate::Slots& slots, const std::string& name) {
    const auto it = slots.find(name);
    if (it == slots.end()) throw Error(ErrorCode::TemplateError, "unfilled slot {{" + name + "}}");
    return it->second;
}

void substitute_line(const std::string& line, const PromptTemplate::Slots& slots, std::string& out) {
    std::size_t pos = 0;
    while (pos < line.size()) {
        const auto open = line.find("{{", pos);
        if (open == std::string::npos) {
            out.append(line, pos);
            return;
        }
        const auto close = line.find("}}", open + 2);
        if (close == std::string::npos) throw Error(ErrorCode::TemplateError, "unterminated placeholder");
        out.append(line, pos, open - pos);
        out += lookup(slots, line.substr(open + 2, close - open - 2));
        pos = close + 2;
    }
}

// A section marker is a line holding nothing but {{#name}} or {{/name}}.
std::optional<std::pair<char, std::string>> section_marker(const std::string& line) {
    const auto t = text::trim(line);
    if (t.size() < 6 || !t.starts_with("{{") || !t.ends_with("}}")) return std::nullopt;
    const char kind = t[2];
    if (kind != '#' && kind != '/') return std::nullopt;
    return std::make_pair(kind, std::string(t.substr(3, t.size() - 5)));
}

}  // namespace

std::string PromptTemplate::expand(const std::string& layout, const Slots& slots) {
    std::string out;
    std::vector<std::pair<std::string, bool>> open_sections;  // name, emitting
    bool emitting = true;
    bool first = true;
    for (const auto& line : text::split_lines(layout)) {
        if (auto marker = section_marker(line)) {
            if (marker->first == '#') {
                open_sections.emplace_back(marker->second, emitting);
                emitting = emitting && !lookup(slots, marker->second).empty();
            } else {
                if (open_sections.empty() || open_sections.back().first != marker->second) {
                    throw Error(ErrorCode::TemplateError, "mismatched section end {{/" + marker->second + "}}");
                }
                emitting = open_sections.back().second;
                open_sections.pop_back();
            }
            continue;
        }
        if (!emitting) continue;
        if (!first) out += '\n';
        first = false;
        substitute_line(line, slots, out);
    }
    if (!open_sections.empty()) {
        throw Error(ErrorCode::TemplateError, "unclosed section {{#" + open_sections.back().first + "}}");
    }
    return out;
}

Prompt PromptTemplate::render(const Slots& slots) const {
    return {Message{"system", expand(preamble_, slots)}, Message{"user", expand(body_, slots)}};
}

const TemplateSet& TemplateSet::defaults() {
    static const TemplateSet set{
        PromptTemplate::parse(detail::kDefaultKcsTemplate),
        PromptTemplate::parse(detail::kDefaultIbcTemplate),
        PromptTemplate::parse(detail::kDefaultSingleTemplate),
        PromptTemplate::parse(detail::kDefaultJudgeTemplate),
    };
    return set;
}

TemplateSet TemplateSet::load_dir(const std::string& dir) {
    const std::filesystem::path base(dir);
    return TemplateSet{
        PromptTemplate::load((base / "kcs.txt").string()),
        PromptTemplate::load((base / "ibc.txt").string()),
        PromptTemplate::load((base / "single.txt").string()),
        PromptTemplate::load((base / "judge.txt").string()),
    };
}

// ---------------------------------------------------------------------------
// Slot formatting

namespace {

std::string label_list(const LabelSpace& space) {
    std::string out;
    for (std::size_t i = 0; i < space.k(); ++i) {
        if (i) out += ", ";
        out += space.label(i);
    }
    return out;
}

std::string distribution_text(const ProbabilityVector& p, const LabelSpace& space) {
    std::string out = "{";
    for (std::size_t i = 0; i < space.k(); ++i) {
        if (i) out += ", ";
        out += fmt::format("\"{}\": {}", space.label(i), text::format_prob(p[i]));
    }
    out += "}";
    return out;
}

std::string block_example(const LabelSpace& space) {
    std::string out = "```json\n{";
    for (std::size_t i = 0; i < space.k(); ++i) {
        if (i) out += ", ";
        out += fmt::format("\"{}\": <probability>", space.label(i));
    }
    out += "}\n```";
    return out;
}

std::string comment_lines(const std::vector<Comment>& comments) {
    std::string out;
    for (const auto& c : comments) {
        if (!out.empty()) out += '\n';
        out += fmt::format("- Agent {}: {}", c.agent_index, c.text);
    }
    return out;
}

PromptTemplate::Slots common_slots(const std::string& input_text, const LabelSpace& space) {
    return {{"input_text", input_text}, {"labels", label_list(space)}, {"block_example", block_example(space)}};
}

}  // namespace

Prompt render_kcs_prompt(const Document& doc, int agent_index, int n_agents, const LabelSpace& space,
                         const TemplateSet& templates) {
    if (agent_index < 1) throw Error(ErrorCode::MissingPredecessor, "KCS steps start at agent 1");
    for (int i = 0; i < agent_index; ++i) {
        if (!doc.has_step(i)) {
            throw Error(ErrorCode::MissingPredecessor,
                        fmt::format("agent {} needs step {} in the document", agent_index, i));
        }
    }
    const auto& prev = doc.step(agent_index - 1);

    std::string opinions;
    for (int i = 1; i < agent_index; ++i) {
        if (!opinions.empty()) opinions += '\n';
        opinions += fmt::format("- Agent {}: {}", i, doc.step(i).reasoning);
    }

    auto slots = common_slots(doc.input_text, space);
    slots["agent_index"] = std::to_string(agent_index);
    slots["n_agents"] = std::to_string(n_agents);
    slots["prev_index"] = std::to_string(agent_index - 1);
    slots["prev_analysis"] = prev.analysis;
    slots["prev_reasoning"] = prev.reasoning;
    slots["prev_distribution"] = distribution_text(prev.distribution, space);
    slots["prior_opinions"] = std::move(opinions);
    slots["comments"] = comment_lines(doc.comments);
    return templates.kcs.render(slots);
}

Prompt render_ibc_prompt(const std::string& input_text, const IbcInputs& inputs, const LabelSpace& space,
                         const TemplateSet& templates) {
    auto slots = common_slots(input_text, space);
    slots["agent_index"] = std::to_string(inputs.agent_index);
    slots["n_agents"] = std::to_string(inputs.n_agents);
    slots["own_analysis"] = inputs.own_analysis.value_or("");
    slots["previous_analysis"] = inputs.previous_analysis.value_or("");
    slots["comments"] = comment_lines(inputs.prior_comments);
    return templates.ibc.render(slots);
}

Prompt render_single_prompt(const std::string& input_text, const LabelSpace& space,
                            const TemplateSet& templates) {
    return templates.single.render(common_slots(input_text, space));
}

Prompt render_judge_prompt(const Document& doc, int n_agents, const LabelSpace& space,
                           const TemplateSet& templates) {
    for (int i = 0; i <= n_agents; ++i) {
        if (!doc.has_step(i)) {
            throw Error(ErrorCode::MissingSteps, fmt::format("judge needs steps 0..{}; step {} is missing",
                                                             n_agents, i));
        }
    }
    std::string outputs;
    for (int i = 1; i <= n_agents; ++i) {
        const auto& s = doc.step(i);
        if (!outputs.empty()) outputs += '\n';
        outputs += fmt::format("Agent {}:\n  Reasoning: {}\n  Distribution: {}", i, s.reasoning,
                               distribution_text(s.distribution, space));
    }
    auto slots = common_slots(doc.input_text, space);
    slots["agent_outputs"] = std::move(outputs);
    slots["comments"] = comment_lines(doc.comments);
    return templates.judge.render(slots);
}

Prompt with_reask(Prompt prompt) {
    for (auto it = prompt.rbegin(); it != prompt.rend(); ++it) {
        if (it->role == "user") {
            it->content += "\n\n";
            it->content += kReaskInstruction;
            return prompt;
        }
    }
    prompt.push_back(Message{"user", std::string(kReaskInstruction)});
    return prompt;
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

constexpr std::string_view kNoReasoning = "(no reasoning given)";

struct Fenced {
    std::string body;
    std::size_t begin = 0;  // offset of the opening fence
    std::size_t end = 0;    // offset one past the closing fence
};

// Last ``` ... ``` block in the reply; the opening fence may carry an info string.
std::optional<Fenced> last_fenced_block(const std::string& reply) {
    std::optional<Fenced> found;
    std::size_t pos = 0;
    while (true) {
        const auto open = reply.find("```", pos);
        if (open == std::string::npos) break;
        auto content_start = reply.find('\n', open + 3);
        if (content_start == std::string::npos) break;
        // Single-line form ```{"a": 1}``` keeps its payload on the fence line.
        const auto inline_close = reply.find("```", open + 3);
        if (inline_close != std::string::npos && inline_close < content_start) {
            std::string info = reply.substr(open + 3, inline_close - open - 3);
            const auto brace = info.find('{');
            found = Fenced{brace == std::string::npos ? "" : info.substr(brace), open, inline_close + 3};
            pos = inline_close + 3;
            continue;
        }
        ++content_start;
        const auto close = reply.find("```", content_start);
        if (close == std::string::npos) break;
        found = Fenced{reply.substr(content_start, close - content_start), open, close + 3};
        pos = close + 3;
    }
    return found;
}

double numeric_value(const json& v, const std::string& key) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = text::trim(v.get_ref<const std::string&>());
        double out = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out)) return out;
    }
    throw Error(ErrorCode::NonNumeric, "value for '" + key + "' is not a number");
}

// Strips markdown decoration so "**Reasoning:**" and "2. Reasoning:" match.
std::string field_key(const std::string& line) {
    std::string s;
    for (char c : line) {
        if (c != '*' && c != '_') s += c;
    }
    auto t = text::trim(s);
    while (!t.empty() && (t.front() == '#' || t.front() == '-' || std::isdigit(static_cast<unsigned char>(t.front())) ||
                          t.front() == '.' || t.front() == ')' || t.front() == ' ')) {
        t.remove_prefix(1);
    }
    return std::string(t);
}

struct ProseFields {
    std::string analysis;
    std::string reasoning;
    bool has_analysis = false;
    bool has_reasoning = false;
};

ProseFields prose_fields(const std::string& prose) {
    ProseFields f;
    std::string* current = nullptr;
    for (const auto& line : text::split_lines(prose)) {
        const auto key = field_key(line);
        const auto lower = text::to_lower(key);
        const auto take = [&](std::string& dst, bool& flag, std::size_t prefix_len) {
            dst = std::string(text::trim(std::string_view(key).substr(prefix_len)));
            flag = true;
            current = &dst;
        };
        if (lower.starts_with("analysis:")) {
            take(f.analysis, f.has_analysis, 9);
        } else if (lower.starts_with("reasoning:")) {
            take(f.reasoning, f.has_reasoning, 10);
        } else if (lower.starts_with("comparison:")) {
            current = nullptr;
        } else if (current != nullptr && !text::trim(line).empty()) {
            if (!current->empty()) *current += ' ';
            *current += text::trim(line);
        }
    }
    return f;
}

}  // namespace

ParsedAgentOutput parse_agent_output(const std::string& reply, const LabelSpace& space) {
    const auto block = last_fenced_block(reply);
    if (!block) throw Error(ErrorCode::ParseFailure, "reply has no fenced probability block");

    json obj;
    try {
        obj = json::parse(block->body);
    } catch (const json::parse_error&) {
        throw Error(ErrorCode::ParseFailure, "fenced block is not valid JSON");
    }
    if (!obj.is_object()) throw Error(ErrorCode::ParseFailure, "fenced block is not a JSON object");

    ParsedAgentOutput out;
    out.raw_probs.assign(space.k(), 0.0);
    std::vector<bool> seen(space.k(), false);
    for (const auto& [key, value] : obj.items()) {
        const auto idx = space.index_of(key);
        if (idx == space.k()) throw Error(ErrorCode::LabelMismatch, "unknown label '" + key + "'");
        if (seen[idx]) throw Error(ErrorCode::LabelMismatch, "label '" + key + "' appears twice");
        seen[idx] = true;
        out.raw_probs[idx] = numeric_value(value, key);
    }
    for (std::size_t i = 0; i < space.k(); ++i) {
        if (!seen[i]) throw Error(ErrorCode::LabelMismatch, "label '" + space.label(i) + "' is missing");
    }

    const std::string prose = reply.substr(0, block->begin) + reply.substr(block->end);
    const auto fields = prose_fields(prose);
    if (fields.has_reasoning && !fields.reasoning.empty()) {
        out.reasoning = fields.reasoning;
    } else {
        out.reasoning = text::first_sentence(prose);
        if (out.reasoning.empty()) out.reasoning = kNoReasoning;
    }
    if (fields.has_analysis && !fields.analysis.empty()) {
        out.analysis = fields.analysis;
    } else {
        const auto trimmed = text::trim(prose);
        out.analysis = trimmed.empty() ? out.reasoning : std::string(trimmed);
    }
    return out;
}

std::string format_probability_block(std::span<const double> probs, const LabelSpace& space) {
    if (probs.size() != space.k()) {
        throw Error(ErrorCode::LengthMismatch, "probability count differs from label count");
    }
    // nlohmann::json would sort the keys; label order is kept explicit instead.
    std::string out = "```json\n{";
    for (std::size_t i = 0; i < space.k(); ++i) {
        if (i) out += ", ";
        out += json(space.label(i)).dump();
        out += ": ";
        out += json(probs[i]).dump();
    }
    out += "}\n```";
    return out;
}

std::string format_agent_reply(const std::string& analysis, const std::string& reasoning,
                               std::span<const double> probs, const LabelSpace& space) {
    return fmt::format("Analysis: {}\nReasoning: {}\nComparison: consistent with the previous view.\n\n{}",
                       analysis, reasoning, format_probability_block(probs, space));
}

}  // namespace kairanban
