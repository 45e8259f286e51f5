#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kairanban/error.hpp"

namespace kairanban {

/// Ordered sentiment label set. Every probability vector in a run indexes into it.
class LabelSpace {
public:
    explicit LabelSpace(std::vector<std::string> labels);

    static LabelSpace three_class();  // negative, neutral, positive
    static LabelSpace five_class();   // very negative .. very positive

    std::size_t k() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    const std::string& label(std::size_t index) const { return labels_.at(index); }

    /// Case-insensitive lookup; returns k() when absent.
    std::size_t index_of(std::string_view name) const noexcept;

    bool operator==(const LabelSpace&) const = default;

private:
    std::vector<std::string> labels_;
};

/// Distribution over a LabelSpace. The placeholder state is the all-zero
/// vector that seeds the circulation and is never a valid prediction.
class ProbabilityVector {
public:
    ProbabilityVector() = default;

    static ProbabilityVector placeholder(std::size_t k);
    /// Validates entries in [0,1] summing to 1 within 1e-6.
    static ProbabilityVector from_entries(std::vector<double> entries);

    const std::vector<double>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    double operator[](std::size_t i) const { return entries_[i]; }
    bool is_placeholder() const noexcept { return placeholder_; }

    bool operator==(const ProbabilityVector&) const = default;

private:
    ProbabilityVector(std::vector<double> entries, bool placeholder)
        : entries_(std::move(entries)), placeholder_(placeholder) {}

    std::vector<double> entries_;
    bool placeholder_ = false;
};

inline constexpr double kSumTolerance = 1e-6;

// Fixed contents of the seed record D_0.
inline constexpr std::string_view kSentinelAnalysis =
    "(initial document: no analysis has been performed yet)";
inline constexpr std::string_view kSentinelReasoning =
    "Initial hypothesis: placeholder only, no sentiment has been judged yet.";
// Stands in for R_i and S_i when an agent's reply could not be parsed.
inline constexpr std::string_view kDegradedAnalysis = "(no parseable output)";

struct AgentStepRecord {
    int agent_index = 0;
    std::string analysis;
    std::string reasoning;
    ProbabilityVector distribution;
    bool degraded = false;

    bool operator==(const AgentStepRecord&) const = default;
};

struct Comment {
    int agent_index = 0;
    std::string text;

    bool operator==(const Comment&) const = default;
};

/// The circulated document. Steps and comments are append-only.
struct Document {
    std::string input_text;
    std::vector<AgentStepRecord> steps;
    std::vector<Comment> comments;

    bool has_step(int agent_index) const noexcept;
    const AgentStepRecord& step(int agent_index) const;

    bool operator==(const Document&) const = default;
};

ProbabilityVector make_uniform(const LabelSpace& space);

/// Divides by the sum. Throws AllZero / NegativeEntry.
ProbabilityVector normalize(std::span<const double> raw);

/// Shannon entropy in nats, with 0 ln 0 = 0.
double entropy(const ProbabilityVector& p);

/// Population variance of the entries around 1/k.
double dist_variance(const ProbabilityVector& p);

/// Ties go to the lowest label index.
std::size_t argmax_index(const ProbabilityVector& p);
const std::string& argmax_label(const ProbabilityVector& p, const LabelSpace& space);

}  // namespace kairanban
