#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kairanban/backend.hpp"
#include "kairanban/core.hpp"

namespace kairanban {

/// A role preamble (system message) and a body layout (user message).
///
/// Placeholders are written `{{name}}`. A section `{{#name}} ... {{/name}}` is
/// emitted only when the slot `name` is non-empty, so an absent input drops
/// its heading along with its content. Rendering fails with TemplateError when
/// the template references a slot the caller did not supply.
class PromptTemplate {
public:
    PromptTemplate() = default;
    PromptTemplate(std::string role_preamble, std::string body_layout);

    /// File layout: preamble, a line containing only `---`, then the body.
    static PromptTemplate parse(const std::string& content);
    static PromptTemplate load(const std::string& path);

    using Slots = std::map<std::string, std::string>;

    Prompt render(const Slots& slots) const;
    static std::string expand(const std::string& layout, const Slots& slots);

    const std::string& role_preamble() const noexcept { return preamble_; }
    const std::string& body_layout() const noexcept { return body_; }

private:
    std::string preamble_;
    std::string body_;
};

/// The four prompt kinds used by the pipelines.
struct TemplateSet {
    PromptTemplate kcs;
    PromptTemplate ibc;
    PromptTemplate single;
    PromptTemplate judge;

    static const TemplateSet& defaults();
    /// Reads kcs.txt, ibc.txt, single.txt, judge.txt from `dir`.
    static TemplateSet load_dir(const std::string& dir);
};

/// Appended to the user message when a reply is re-asked after a parse failure.
inline constexpr std::string_view kReaskInstruction =
    "Your previous reply could not be read. Respond with only the fenced ```json block "
    "containing one probability per label, and nothing else.";

/// Inputs to one IBC comment. Absent fields are not rendered.
struct IbcInputs {
    int agent_index = 0;
    int n_agents = 0;
    std::optional<std::string> own_analysis;       // R^j
    std::optional<std::string> previous_analysis;  // R^{j-1}
    std::vector<Comment> prior_comments;

    bool operator==(const IbcInputs&) const = default;
};

Prompt render_kcs_prompt(const Document& doc, int agent_index, int n_agents, const LabelSpace& space,
                         const TemplateSet& templates = TemplateSet::defaults());
Prompt render_ibc_prompt(const std::string& input_text, const IbcInputs& inputs, const LabelSpace& space,
                         const TemplateSet& templates = TemplateSet::defaults());
Prompt render_single_prompt(const std::string& input_text, const LabelSpace& space,
                            const TemplateSet& templates = TemplateSet::defaults());
/// `n_agents` is N: the document must hold steps 0..N.
Prompt render_judge_prompt(const Document& doc, int n_agents, const LabelSpace& space,
                           const TemplateSet& templates = TemplateSet::defaults());

/// Adds kReaskInstruction to the last user message.
Prompt with_reask(Prompt prompt);

struct ParsedAgentOutput {
    std::string analysis;
    std::string reasoning;
    std::vector<double> raw_probs;  // indexed by LabelSpace order

    bool operator==(const ParsedAgentOutput&) const = default;
};

/// Extracts the fenced JSON probability block and the prose fields.
/// Errors: ParseFailure, LabelMismatch, NonNumeric.
ParsedAgentOutput parse_agent_output(const std::string& reply, const LabelSpace& space);

/// Fenced JSON block keyed by label, as the agents are asked to emit it.
std::string format_probability_block(std::span<const double> probs, const LabelSpace& space);

/// A complete well-formed agent reply; used by fixtures and tests.
std::string format_agent_reply(const std::string& analysis, const std::string& reasoning,
                               std::span<const double> probs, const LabelSpace& space);

}  // namespace kairanban
