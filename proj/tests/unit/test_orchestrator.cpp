#include <string>

#include "doctest.h"
#include "kairanban/fixtures.hpp"
#include "kairanban/orchestrator.hpp"

using namespace kairanban;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::IoError;
}

bool contains(const std::string& hay, std::string_view needle) { return hay.find(needle) != std::string::npos; }

PipelineConfig config(SystemKind system, int n = 6, int m = 3) {
    PipelineConfig c;
    c.system = system;
    c.n_agents = n;
    c.ibc_index = m;
    return c;
}

constexpr std::string_view kText = "The plot drags, yet the ending lands.";

std::vector<std::pair<Phase, int>> call_order(const Transcript& t) {
    std::vector<std::pair<Phase, int>> out;
    for (const auto& c : t.calls) out.emplace_back(c.phase, c.agent_index);
    return out;
}

}  // namespace

TEST_CASE("configuration validation") {
    CHECK_NOTHROW(config(SystemKind::KcsIbc, 6, 1).validate());
    CHECK_NOTHROW(config(SystemKind::KcsIbc, 6, 6).validate());
    CHECK(code_of([] { config(SystemKind::KcsIbc, 6, 0).validate(); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config(SystemKind::KcsIbc, 6, 7).validate(); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { config(SystemKind::Kcs, 0, 1).validate(); }) == ErrorCode::InvalidConfig);
    CHECK(parse_system("KCS+IBC") == SystemKind::KcsIbc);
    CHECK(code_of([] { parse_system("debate"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("seed document") {
    ScriptedBackend backend(Script{});
    Pipeline p(config(SystemKind::Kcs), backend);
    const auto d = p.init_document(kText);
    REQUIRE(d.steps.size() == 1);
    CHECK(d.steps[0].agent_index == 0);
    CHECK(d.steps[0].analysis == kSentinelAnalysis);
    CHECK(d.steps[0].reasoning == kSentinelReasoning);
    CHECK(d.steps[0].distribution.is_placeholder());
    CHECK(d.steps[0].distribution.entries() == std::vector<double>{0, 0, 0});
    CHECK(code_of([&] { p.init_document("   "); }) == ErrorCode::EmptyInstance);
    CHECK(backend.consumed() == 0);
}

TEST_CASE("KCS makes N+1 calls in order") {
    const auto space = LabelSpace::three_class();
    ScriptedBackend backend(fixtures::converging_script(6, 3, space));
    Pipeline p(config(SystemKind::Kcs), backend);
    const auto t = p.run(kText, "x:1");
    CHECK(backend.consumed() == 7);
    const std::vector<std::pair<Phase, int>> want{{Phase::Kcs, 1}, {Phase::Kcs, 2}, {Phase::Kcs, 3}, {Phase::Kcs, 4},
                                                  {Phase::Kcs, 5}, {Phase::Kcs, 6}, {Phase::Judge, 0}};
    CHECK(call_order(t) == want);
    CHECK(t.document.steps.size() == 7);
    CHECK(t.document.comments.empty());
    CHECK(t.per_step_distributions.size() == 6);
    CHECK_FALSE(t.degraded_any());
    const auto expected = fixtures::converging_distributions(6, space);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t c = 0; c < 3; ++c) CHECK(t.per_step_distributions[i][c] == doctest::Approx(expected[i][c]));
    }
}

TEST_CASE("KCS+IBC makes 2N+2 calls with the session before step m") {
    ScriptedBackend backend(fixtures::converging_script(6, 3, LabelSpace::three_class()));
    Pipeline p(config(SystemKind::KcsIbc), backend);
    const auto t = p.run(kText);
    CHECK(backend.consumed() == 14);
    std::vector<std::pair<Phase, int>> want{{Phase::Kcs, 1}, {Phase::Kcs, 2}};
    for (int j = 0; j <= 6; ++j) want.emplace_back(Phase::Ibc, j);
    for (int i = 3; i <= 6; ++i) want.emplace_back(Phase::Kcs, i);
    want.emplace_back(Phase::Judge, 0);
    CHECK(call_order(t) == want);
    REQUIRE(t.document.comments.size() == 7);
    for (int j = 0; j <= 6; ++j) CHECK(t.document.comments[j].agent_index == j);

    // steps before m never see comments, steps from m on do
    CHECK_FALSE(contains(t.calls[1].prompt[1].content, "Comments from the informal discussion"));
    CHECK(contains(t.calls[9].prompt[1].content, "Comments from the informal discussion"));
    CHECK(contains(t.calls[13].prompt[1].content, "Comments from the informal discussion"));
}

TEST_CASE("IBC at the first and last positions") {
    for (int m : {1, 6}) {
        ScriptedBackend backend(fixtures::converging_script(6, m, LabelSpace::three_class()));
        Pipeline p(config(SystemKind::KcsIbc, 6, m), backend);
        const auto t = p.run(kText);
        CHECK(backend.consumed() == 14);
        CHECK(t.calls[static_cast<std::size_t>(m - 1)].phase == Phase::Ibc);
        CHECK(t.calls[static_cast<std::size_t>(m - 1 + 7)].phase == Phase::Kcs);
        CHECK(t.calls[static_cast<std::size_t>(m - 1 + 7)].agent_index == m);
    }
}

TEST_CASE("IBC inputs follow the four cases") {
    ScriptedBackend backend(fixtures::converging_script(6, 3, LabelSpace::three_class()));
    Pipeline p(config(SystemKind::KcsIbc), backend);
    CallLog log;
    auto d = p.init_document(kText);
    d = p.kcs_step(d, 1, log);
    d = p.kcs_step(d, 2, log);
    const std::vector<Comment> so_far{Comment{0, "c0"}, Comment{1, "c1"}, Comment{2, "c2"}, Comment{3, "c3"}};

    const auto in0 = p.ibc_inputs(d, 0, {});
    CHECK(in0.own_analysis == std::string(kSentinelAnalysis));
    CHECK_FALSE(in0.previous_analysis);
    CHECK(in0.prior_comments.empty());

    const auto in2 = p.ibc_inputs(d, 2, {so_far.begin(), so_far.begin() + 2});
    CHECK(in2.own_analysis == d.step(2).analysis);
    CHECK(in2.previous_analysis == d.step(1).analysis);
    CHECK(in2.prior_comments.size() == 2);

    const auto in3 = p.ibc_inputs(d, 3, {so_far.begin(), so_far.begin() + 3});
    CHECK_FALSE(in3.own_analysis);
    CHECK(in3.previous_analysis == d.step(2).analysis);
    CHECK(in3.prior_comments.size() == 3);

    const auto in5 = p.ibc_inputs(d, 5, so_far);
    CHECK_FALSE(in5.own_analysis);
    CHECK_FALSE(in5.previous_analysis);
    CHECK(in5.prior_comments == so_far);
}

TEST_CASE("IBC session preconditions") {
    ScriptedBackend backend(fixtures::converging_script(6, 3, LabelSpace::three_class()));
    Pipeline p(config(SystemKind::KcsIbc), backend);
    CallLog log;
    auto d = p.init_document(kText);
    d = p.kcs_step(d, 1, log);
    CHECK(code_of([&] { p.ibc_session(d, log); }) == ErrorCode::MissingAnalysis);
    d = p.kcs_step(d, 2, log);
    const auto after = p.ibc_session(d, log);
    CHECK(after.comments.size() == 7);
    CHECK(d.comments.empty());  // input left untouched
    CHECK(code_of([&] { p.ibc_session(after, log); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("steps need their predecessors and the judge needs every step") {
    ScriptedBackend backend(fixtures::converging_script(6, 3, LabelSpace::three_class()));
    Pipeline p(config(SystemKind::Kcs), backend);
    CallLog log;
    auto d = p.init_document(kText);
    CHECK(code_of([&] { p.kcs_step(d, 2, log); }) == ErrorCode::MissingPredecessor);
    d = p.kcs_step(d, 1, log);
    CHECK(code_of([&] { p.judge_finalize(d, log); }) == ErrorCode::MissingSteps);
    CHECK(code_of([&] { p.kcs_step(d, 1, log); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("an unparseable step is re-asked once and then degrades to uniform") {
    auto script = fixtures::converging_script(6, 3, LabelSpace::three_class());
    for (auto& e : script.entries) {
        if (e.phase == "kcs" && e.agent_index == 4) {
            e.reply = "I would rather not give numbers.";
            e.malformed = true;
        }
    }
    ScriptedBackend backend(script);
    Pipeline p(config(SystemKind::Kcs), backend);
    const auto t = p.run(kText);
    CHECK(backend.consumed() == 8);
    CHECK(t.degraded_any());
    const auto& s4 = t.document.step(4);
    CHECK(s4.degraded);
    CHECK(s4.analysis == kDegradedAnalysis);
    for (double v : s4.distribution.entries()) CHECK(v == doctest::Approx(1.0 / 3.0));

    REQUIRE(t.calls.size() == 8);
    CHECK(t.calls[3].agent_index == 4);
    CHECK_FALSE(t.calls[3].reask);
    CHECK_FALSE(t.calls[3].degraded);
    CHECK(t.calls[3].parsed.is_null());
    CHECK(t.calls[4].reask);
    CHECK(t.calls[4].degraded);
    CHECK(t.calls[4].prompt[1].content.ends_with(kReaskInstruction));
    // agent 5 sees the degraded record as its predecessor
    CHECK(contains(t.calls[5].prompt[1].content, kDegradedAnalysis));
}

TEST_CASE("a re-ask that succeeds is not degraded") {
    const auto space = LabelSpace::three_class();
    PipelineConfig c = config(SystemKind::Single);
    const auto first = render_single_prompt(std::string(kText), space);
    Script script;
    script.entries.push_back(ScriptEntry{"no block here", request_fingerprint(first)});
    script.entries.push_back(ScriptEntry{"```json\n{\"negative\": 0.1, \"neutral\": 0.1, \"positive\": 0.8}\n```",
                                         request_fingerprint(with_reask(first))});
    ScriptedBackend backend(script);
    const auto t = Pipeline(c, backend).run(kText);
    CHECK(t.calls.size() == 2);
    CHECK_FALSE(t.degraded_any());
    CHECK(t.final_distribution[2] == doctest::Approx(0.8));
}

TEST_CASE("an empty IBC reply becomes a placeholder comment") {
    auto script = fixtures::converging_script(6, 3, LabelSpace::three_class());
    for (auto& e : script.entries) {
        if (e.phase == "ibc" && e.agent_index == 2) e.reply = "  \n";
    }
    ScriptedBackend backend(script);
    const auto t = Pipeline(config(SystemKind::KcsIbc), backend).run(kText);
    CHECK(backend.consumed() == 14);
    CHECK(t.document.comments[2].text == "(no comment)");
    CHECK(t.degraded_any());
}

TEST_CASE("last-step finalization skips the judge") {
    ScriptedBackend backend(fixtures::converging_script(6, 3, LabelSpace::three_class()));
    auto c = config(SystemKind::Kcs);
    c.finalize = FinalizeMode::LastStep;
    const auto t = Pipeline(c, backend).run(kText);
    CHECK(backend.consumed() == 6);
    CHECK(t.final_distribution == t.document.step(6).distribution);
}

TEST_CASE("single pass") {
    ScriptedBackend backend(fixtures::converging_script(6, 3, LabelSpace::three_class()));
    const auto t = Pipeline(config(SystemKind::Single), backend).run(kText, "tweeteval:3");
    CHECK(backend.consumed() == 1);
    CHECK(t.calls[0].phase == Phase::Single);
    CHECK(t.per_step_distributions.size() == 1);
    CHECK(t.instance_id == "tweeteval:3");
}

TEST_CASE("transport errors propagate") {
    ScriptedBackend backend(Script{});
    CHECK(code_of([&] { Pipeline(config(SystemKind::Kcs), backend).run(kText); }) == ErrorCode::ScriptExhausted);
}

TEST_CASE("transcripts round-trip through JSON and runs are deterministic") {
    const auto space = LabelSpace::five_class();
    auto c = config(SystemKind::KcsIbc);
    c.space = space;
    c.model = "m";
    ScriptedBackend b1(fixtures::converging_script(6, 3, space));
    ScriptedBackend b2(fixtures::converging_script(6, 3, space));
    auto t1 = Pipeline(c, b1).run(kText, "sst5:9");
    const auto t2 = Pipeline(c, b2).run(kText, "sst5:9");
    CHECK(t1 == t2);
    t1.gold_label_index = 4;
    const auto back = transcript_from_json(to_json(t1));
    CHECK(back == t1);
    CHECK(back.document.step(0).distribution.is_placeholder());
    CHECK(to_json(back).dump() == to_json(t1).dump());
}
