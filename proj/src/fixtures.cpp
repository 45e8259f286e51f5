#include "kairanban/fixtures.hpp"

#include <cmath>

#include <fmt/format.h>

#include "kairanban/prompting.hpp"

namespace kairanban::fixtures {

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

Script build(int n_agents, int ibc_index, const LabelSpace& space,
             const std::vector<std::vector<double>>& steps, bool converging) {
    Script script;
    const auto& target = space.label(space.k() - 1);
    const auto tag = [&script](std::string phase, int agent, std::string reply) {
        script.entries.push_back(ScriptEntry{std::move(reply), std::nullopt, std::move(phase), agent, false});
    };

    for (int s = 1; s <= n_agents; ++s) {
        const auto& p = steps[static_cast<std::size_t>(s - 1)];
        const auto analysis =
            converging ? fmt::format("Agent {} reads the text as {} and is more certain than the agent before.", s,
                                     target)
                       : fmt::format("Agent {} finds no cue that separates the labels.", s);
        const auto reasoning = converging
                                   ? fmt::format("The wording keeps pointing to {}, so agent {} sharpens the estimate.",
                                                 target, s)
                                   : fmt::format("Agent {} sees every label as equally likely.", s);
        tag("kcs", s, format_agent_reply(analysis, reasoning, p, space));
    }
    for (int j = 0; j <= n_agents; ++j) {
        const auto when = j < ibc_index ? "Having read the earlier analyses" : "Listening to the others";
        tag("ibc", j,
            converging ? fmt::format("{}, I lean {} as well, though the tone could hide some irony.", when, target)
                       : fmt::format("{}, I still cannot tell which label fits best.", when));
    }
    const auto& last = steps.back();
    tag("judge", 0,
        format_agent_reply("The circulated document converges.", "The agents agree on the final view.", last, space));
    tag("single", 0, format_agent_reply("Single pass.", "The text reads as a whole.", last, space));
    return script;
}

}  // namespace

std::vector<std::vector<double>> converging_distributions(int n_agents, const LabelSpace& space) {
    const auto k = space.k();
    std::vector<std::vector<double>> out;
    for (int s = 1; s <= n_agents; ++s) {
        // Mixing weight toward the one-hot on the last label, from 0.1 to 0.9.
        const double t = n_agents == 1 ? 0.5 : 0.1 + 0.8 * (s - 1) / (n_agents - 1);
        const double rest = round4((1.0 - t) / static_cast<double>(k));
        std::vector<double> p(k, rest);
        p[k - 1] = round4(1.0 - rest * static_cast<double>(k - 1));
        out.push_back(std::move(p));
    }
    return out;
}

Script converging_script(int n_agents, int ibc_index, const LabelSpace& space) {
    return build(n_agents, ibc_index, space, converging_distributions(n_agents, space), true);
}

Script uniform_script(int n_agents, int ibc_index, const LabelSpace& space) {
    const std::vector<double> uniform(space.k(), 1.0 / static_cast<double>(space.k()));
    return build(n_agents, ibc_index, space, std::vector<std::vector<double>>(n_agents, uniform), false);
}

}  // namespace kairanban::fixtures
