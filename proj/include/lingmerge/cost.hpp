#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace lingmerge::cost {

struct LanguageUpdate {
    std::string label;
    double retrain_hours = 0.0;           // merged path: retrain this adapter only
    double combined_retrain_hours = 0.0;  // retrain-all path
};

// Observed wall-clock and cost for both strategies. When present these are
// reported as-is instead of the prediction.
struct Measured {
    double combined_hours = 0.0;
    double merged_hours = 0.0;
    double combined_cost = 0.0;
    double merged_cost = 0.0;
};

struct CostScenario {
    std::map<std::string, double> per_language_hours;
    double combined_hours = 0.0;
    unsigned parallel_slots = 1;
    double rate_per_gpu_hour = 0.0;
    double merge_overhead_hours = 0.0;
    double combined_gpus = 1.0;  // GPUs billed per hour of the combined job
    std::optional<LanguageUpdate> update;
    std::optional<Measured> measured_initial;
    std::optional<Measured> measured_update;

    void validate() const;
    static CostScenario from_json(const nlohmann::json& j);
};

enum class Mode { kInitial, kUpdate };

struct ComparisonReport {
    Mode mode = Mode::kInitial;
    bool measured = false;
    double combined_time_hours = 0.0;
    double merged_time_hours = 0.0;
    double combined_cost = 0.0;
    double merged_cost = 0.0;
    double time_reduction_pct = 0.0;
    double cost_reduction_pct = 0.0;

    nlohmann::json to_json() const;
};

// 100 * (before - after) / before. Zero before with nonzero after throws
// kUndefinedRate; 0 -> 0 is a 0% change.
double reduction_pct(double before, double after);

// Rounded to one decimal, as rendered.
double round1(double pct);

// Longest-processing-time-first assignment onto `slots` machines; returns the
// finishing time of the busiest machine.
double lpt_makespan(const std::vector<double>& jobs, unsigned slots);

ComparisonReport compare(const Measured& m, Mode mode);
ComparisonReport initial_setup(const CostScenario& s);
ComparisonReport update_language(const CostScenario& s);

// Aligned text table laid out like a time/cost comparison table.
void render_table(std::ostream& os, const std::vector<ComparisonReport>& reports);

}  // namespace lingmerge::cost
