#pragma once

#include <string>
#include <vector>

#include "kairanban/core.hpp"

namespace kairanban {

struct EvalRecord {
    std::string instance_id;
    int gold_label_index = 0;
    ProbabilityVector final_distribution;
    std::vector<ProbabilityVector> per_step_distributions;
    bool degraded_any = false;
};

/// How macro-F1 treats a class with neither gold nor predicted instances.
enum class AbsentClassPolicy {
    Zero,  // contributes F1 = 0 and is averaged
    Skip,  // left out of the average
};

enum class BrierConvention {
    Mean,  // (1/k) * sum_c (p_c - y_c)^2
    Sum,   // sum_c (p_c - y_c)^2
};

inline constexpr double kLogLossClip = 1e-10;

double macro_f1(const std::vector<EvalRecord>& records, const LabelSpace& space,
                AbsentClassPolicy absent = AbsentClassPolicy::Zero);
double micro_f1(const std::vector<EvalRecord>& records, const LabelSpace& space);
/// Mean of -ln p_gold with p_gold clipped to [kLogLossClip, 1].
double log_loss(const std::vector<EvalRecord>& records);
double brier(const std::vector<EvalRecord>& records, BrierConvention convention = BrierConvention::Mean);

struct StepStat {
    int step = 0;  // 1-based agent step
    double mean_entropy = 0.0;
    double delta_entropy = 0.0;
    double se_entropy = 0.0;
    double mean_variance = 0.0;
    double delta_variance = 0.0;
    double se_variance = 0.0;
};

struct StepStats {
    std::vector<StepStat> steps;
};

/// Per step: mean and standard error (sample stdev / sqrt(n)) of entropy and
/// variance across records; deltas against the previous step, 0 at step 1.
StepStats step_stats(const std::vector<EvalRecord>& records, int n_agents);

/// Unweighted mean over inputs of means and deltas; SE is the mean of SEs.
StepStats cross_dataset_average(const std::vector<StepStats>& stats);

/// "0.8377(+0.0000)": four decimals, signed delta in parentheses.
std::string format_value_delta(double value, double delta);

}  // namespace kairanban
