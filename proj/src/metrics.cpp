#include "kairanban/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace kairanban {

namespace {

void require_records(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw Error(ErrorCode::EmptyRecords, "no records to score");
}

std::size_t gold_of(const EvalRecord& r, std::size_t k) {
    if (r.gold_label_index < 0 || static_cast<std::size_t>(r.gold_label_index) >= k) {
        throw Error(ErrorCode::LengthMismatch, "gold label outside the label space for " + r.instance_id);
    }
    return static_cast<std::size_t>(r.gold_label_index);
}

struct Confusion {
    std::vector<std::size_t> tp, fp, fn;
};

Confusion confusion(const std::vector<EvalRecord>& records, std::size_t k) {
    Confusion c{std::vector<std::size_t>(k), std::vector<std::size_t>(k), std::vector<std::size_t>(k)};
    for (const auto& r : records) {
        if (r.final_distribution.size() != k) {
            throw Error(ErrorCode::LengthMismatch, "distribution length differs for " + r.instance_id);
        }
        const auto gold = gold_of(r, k);
        const auto pred = argmax_index(r.final_distribution);
        if (pred == gold) {
            ++c.tp[gold];
        } else {
            ++c.fp[pred];
            ++c.fn[gold];
        }
    }
    return c;
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
    const auto denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double standard_error(const std::vector<double>& v, double m) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return sd / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

double macro_f1(const std::vector<EvalRecord>& records, const LabelSpace& space, AbsentClassPolicy absent) {
    require_records(records);
    const auto c = confusion(records, space.k());
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < space.k(); ++i) {
        const bool empty_class = c.tp[i] + c.fp[i] + c.fn[i] == 0;
        if (empty_class && absent == AbsentClassPolicy::Skip) continue;
        sum += f1(c.tp[i], c.fp[i], c.fn[i]);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

double micro_f1(const std::vector<EvalRecord>& records, const LabelSpace& space) {
    require_records(records);
    const auto c = confusion(records, space.k());
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < space.k(); ++i) {
        tp += c.tp[i];
        fp += c.fp[i];
        fn += c.fn[i];
    }
    return f1(tp, fp, fn);
}

double log_loss(const std::vector<EvalRecord>& records) {
    require_records(records);
    double total = 0.0;
    for (const auto& r : records) {
        const double p = r.final_distribution[gold_of(r, r.final_distribution.size())];
        total -= std::log(std::clamp(p, kLogLossClip, 1.0));
    }
    return total / static_cast<double>(records.size());
}

double brier(const std::vector<EvalRecord>& records, BrierConvention convention) {
    require_records(records);
    double total = 0.0;
    for (const auto& r : records) {
        const auto k = r.final_distribution.size();
        const auto gold = gold_of(r, k);
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double d = r.final_distribution[c] - (c == gold ? 1.0 : 0.0);
            s += d * d;
        }
        total += convention == BrierConvention::Mean ? s / static_cast<double>(k) : s;
    }
    return total / static_cast<double>(records.size());
}

StepStats step_stats(const std::vector<EvalRecord>& records, int n_agents) {
    require_records(records);
    if (n_agents < 1) throw Error(ErrorCode::LengthMismatch, "n_agents must be positive");
    const auto n = static_cast<std::size_t>(n_agents);
    for (const auto& r : records) {
        if (r.per_step_distributions.size() != n) {
            throw Error(ErrorCode::LengthMismatch,
                        fmt::format("{} has {} step distributions, expected {}", r.instance_id,
                                    r.per_step_distributions.size(), n));
        }
    }
    StepStats out;
    std::vector<double> h(records.size()), v(records.size());
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            h[i] = entropy(records[i].per_step_distributions[s]);
            v[i] = dist_variance(records[i].per_step_distributions[s]);
        }
        StepStat st;
        st.step = static_cast<int>(s + 1);
        st.mean_entropy = mean(h);
        st.se_entropy = standard_error(h, st.mean_entropy);
        st.mean_variance = mean(v);
        st.se_variance = standard_error(v, st.mean_variance);
        if (s > 0) {
            st.delta_entropy = st.mean_entropy - out.steps.back().mean_entropy;
            st.delta_variance = st.mean_variance - out.steps.back().mean_variance;
        }
        out.steps.push_back(st);
    }
    return out;
}

StepStats cross_dataset_average(const std::vector<StepStats>& stats) {
    if (stats.empty()) throw Error(ErrorCode::EmptyRecords, "nothing to average");
    const auto n = stats.front().steps.size();
    for (const auto& s : stats) {
        if (s.steps.size() != n) throw Error(ErrorCode::LengthMismatch, "step counts differ across datasets");
    }
    const double count = static_cast<double>(stats.size());
    StepStats out;
    out.steps.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& o = out.steps[i];
        o.step = static_cast<int>(i + 1);
        for (const auto& s : stats) {
            const auto& x = s.steps[i];
            o.mean_entropy += x.mean_entropy;
            o.delta_entropy += x.delta_entropy;
            o.se_entropy += x.se_entropy;
            o.mean_variance += x.mean_variance;
            o.delta_variance += x.delta_variance;
            o.se_variance += x.se_variance;
        }
        o.mean_entropy /= count;
        o.delta_entropy /= count;
        o.se_entropy /= count;
        o.mean_variance /= count;
        o.delta_variance /= count;
        o.se_variance /= count;
    }
    return out;
}

std::string format_value_delta(double value, double delta) {
    auto d = fmt::format("{:+.4f}", delta);
    if (d == "-0.0000") d = "+0.0000";
    return fmt::format("{:.4f}({})", value, d);
}

}  // namespace kairanban
