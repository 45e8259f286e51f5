#include "kairanban/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "kairanban/text.hpp"

namespace kairanban {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::AllZero: return "AllZero";
        case ErrorCode::NegativeEntry: return "NegativeEntry";
        case ErrorCode::PlaceholderInput: return "PlaceholderInput";
        case ErrorCode::InvalidLabelSpace: return "InvalidLabelSpace";
        case ErrorCode::InvalidDistribution: return "InvalidDistribution";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::AuthError: return "AuthError";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::ScriptExhausted: return "ScriptExhausted";
        case ErrorCode::MissingPredecessor: return "MissingPredecessor";
        case ErrorCode::MissingSteps: return "MissingSteps";
        case ErrorCode::ParseFailure: return "ParseFailure";
        case ErrorCode::LabelMismatch: return "LabelMismatch";
        case ErrorCode::NonNumeric: return "NonNumeric";
        case ErrorCode::TemplateError: return "TemplateError";
        case ErrorCode::EmptyInstance: return "EmptyInstance";
        case ErrorCode::MissingAnalysis: return "MissingAnalysis";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::FileNotFound: return "FileNotFound";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::SampleTooLarge: return "SampleTooLarge";
        case ErrorCode::EmptyRecords: return "EmptyRecords";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

LabelSpace::LabelSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.size() < 2) {
        throw Error(ErrorCode::InvalidLabelSpace, "a label space needs at least two labels");
    }
    std::unordered_set<std::string> seen;
    for (const auto& label : labels_) {
        if (text::trim(label).empty()) {
            throw Error(ErrorCode::InvalidLabelSpace, "empty label name");
        }
        if (!seen.insert(text::to_lower(label)).second) {
            throw Error(ErrorCode::InvalidLabelSpace, "duplicate label '" + label + "'");
        }
    }
}

LabelSpace LabelSpace::three_class() { return LabelSpace({"negative", "neutral", "positive"}); }

LabelSpace LabelSpace::five_class() {
    return LabelSpace({"very negative", "negative", "neutral", "positive", "very positive"});
}

std::size_t LabelSpace::index_of(std::string_view name) const noexcept {
    const std::string needle = text::to_lower(text::trim(name));
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (text::to_lower(labels_[i]) == needle) return i;
    }
    return labels_.size();
}

ProbabilityVector ProbabilityVector::placeholder(std::size_t k) {
    return ProbabilityVector(std::vector<double>(k, 0.0), true);
}

ProbabilityVector ProbabilityVector::from_entries(std::vector<double> entries) {
    double sum = 0.0;
    for (double v : entries) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw Error(ErrorCode::InvalidDistribution, "entry outside [0,1]");
        }
        sum += v;
    }
    if (entries.empty() || std::abs(sum - 1.0) > kSumTolerance) {
        throw Error(ErrorCode::InvalidDistribution, "entries do not sum to 1");
    }
    return ProbabilityVector(std::move(entries), false);
}

bool Document::has_step(int agent_index) const noexcept {
    return agent_index >= 0 && static_cast<std::size_t>(agent_index) < steps.size();
}

const AgentStepRecord& Document::step(int agent_index) const {
    if (!has_step(agent_index)) {
        throw Error(ErrorCode::MissingPredecessor,
                    "document has no step " + std::to_string(agent_index));
    }
    return steps[static_cast<std::size_t>(agent_index)];
}

ProbabilityVector make_uniform(const LabelSpace& space) {
    const double k = static_cast<double>(space.k());
    return ProbabilityVector::from_entries(std::vector<double>(space.k(), 1.0 / k));
}

ProbabilityVector normalize(std::span<const double> raw) {
    double sum = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidDistribution, "non-finite entry");
        if (v < 0.0) throw Error(ErrorCode::NegativeEntry, "probabilities must be non-negative");
        sum += v;
    }
    if (sum <= 0.0) throw Error(ErrorCode::AllZero, "every entry is zero");
    std::vector<double> out(raw.begin(), raw.end());
    for (double& v : out) v /= sum;
    return ProbabilityVector::from_entries(std::move(out));
}

namespace {

void require_real(const ProbabilityVector& p) {
    if (p.is_placeholder()) {
        throw Error(ErrorCode::PlaceholderInput, "placeholder distribution has no statistics");
    }
}

}  // namespace

double entropy(const ProbabilityVector& p) {
    require_real(p);
    double h = 0.0;
    for (double v : p.entries()) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

double dist_variance(const ProbabilityVector& p) {
    require_real(p);
    const double k = static_cast<double>(p.size());
    const double mean = 1.0 / k;
    double acc = 0.0;
    for (double v : p.entries()) acc += (v - mean) * (v - mean);
    return acc / k;
}

std::size_t argmax_index(const ProbabilityVector& p) {
    require_real(p);
    const auto& e = p.entries();
    // max_element returns the first maximal element
    return static_cast<std::size_t>(std::max_element(e.begin(), e.end()) - e.begin());
}

const std::string& argmax_label(const ProbabilityVector& p, const LabelSpace& space) {
    if (p.size() != space.k()) {
        throw Error(ErrorCode::LengthMismatch, "distribution length differs from label count");
    }
    return space.label(argmax_index(p));
}

}  // namespace kairanban
