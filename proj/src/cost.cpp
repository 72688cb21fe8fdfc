#include "lingmerge/cost.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <queue>

#include "lingmerge/error.hpp"

namespace lingmerge::cost {

namespace {

void require_nonneg(double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::kParameter, std::string(what) + " must be a finite non-negative number");
    }
}

Measured parse_measured(const nlohmann::json& j) {
    Measured m;
    m.combined_hours = j.at("combined_hours").get<double>();
    m.merged_hours = j.at("merged_hours").get<double>();
    m.combined_cost = j.at("combined_cost").get<double>();
    m.merged_cost = j.at("merged_cost").get<double>();
    return m;
}

ComparisonReport finish(ComparisonReport r) {
    r.time_reduction_pct = reduction_pct(r.combined_time_hours, r.merged_time_hours);
    r.cost_reduction_pct = reduction_pct(r.combined_cost, r.merged_cost);
    return r;
}

std::string pct_text(double pct) {
    char buf[64];
    const double r = round1(pct);
    if (r >= 0.0) std::snprintf(buf, sizeof(buf), "(%.1f%% down)", r);
    else std::snprintf(buf, sizeof(buf), "(%.1f%% up)", -r);
    return buf;
}

}  // namespace

void CostScenario::validate() const {
    for (const auto& [label, h] : per_language_hours) require_nonneg(h, ("hours for '" + label + "'").c_str());
    require_nonneg(combined_hours, "combined_hours");
    require_nonneg(rate_per_gpu_hour, "rate_per_gpu_hour");
    require_nonneg(merge_overhead_hours, "merge_overhead_hours");
    require_nonneg(combined_gpus, "combined_gpus");
    if (parallel_slots < 1) throw Error(ErrorCode::kParameter, "parallel_slots must be at least 1");
    if (update) {
        require_nonneg(update->retrain_hours, "update.retrain_hours");
        require_nonneg(update->combined_retrain_hours, "update.combined_retrain_hours");
    }
    for (const auto* m : {measured_initial ? &*measured_initial : nullptr, measured_update ? &*measured_update : nullptr}) {
        if (!m) continue;
        require_nonneg(m->combined_hours, "measured combined_hours");
        require_nonneg(m->merged_hours, "measured merged_hours");
        require_nonneg(m->combined_cost, "measured combined_cost");
        require_nonneg(m->merged_cost, "measured merged_cost");
    }
}

CostScenario CostScenario::from_json(const nlohmann::json& j) {
    CostScenario s;
    try {
        if (j.contains("per_language_hours")) s.per_language_hours = j["per_language_hours"].get<std::map<std::string, double>>();
        s.combined_hours = j.value("combined_hours", 0.0);
        const auto slots = j.value("parallel_slots", std::int64_t{1});
        if (slots < 1) throw Error(ErrorCode::kParameter, "parallel_slots must be at least 1");
        s.parallel_slots = static_cast<unsigned>(slots);
        s.rate_per_gpu_hour = j.value("rate_per_gpu_hour", 0.0);
        s.merge_overhead_hours = j.value("merge_overhead_hours", 0.0);
        s.combined_gpus = j.value("combined_gpus", 1.0);
        if (j.contains("update")) {
            const auto& u = j["update"];
            s.update = LanguageUpdate{u.at("label").get<std::string>(), u.at("retrain_hours").get<double>(),
                                      u.at("combined_retrain_hours").get<double>()};
        }
        if (j.contains("measured")) {
            const auto& m = j["measured"];
            if (m.contains("initial")) s.measured_initial = parse_measured(m["initial"]);
            if (m.contains("update")) s.measured_update = parse_measured(m["update"]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParameter, std::string("bad cost scenario: ") + e.what());
    }
    s.validate();
    return s;
}

nlohmann::json ComparisonReport::to_json() const {
    return {{"mode", mode == Mode::kInitial ? "initial" : "update"},
            {"source", measured ? "measured" : "predicted"},
            {"combined_time_hours", combined_time_hours},
            {"merged_time_hours", merged_time_hours},
            {"combined_cost", combined_cost},
            {"merged_cost", merged_cost},
            {"time_reduction_pct", round1(time_reduction_pct)},
            {"cost_reduction_pct", round1(cost_reduction_pct)}};
}

double reduction_pct(double before, double after) {
    if (before == 0.0) {
        if (after == 0.0) return 0.0;
        throw Error(ErrorCode::kUndefinedRate, "reduction is undefined against a zero baseline");
    }
    return 100.0 * (before - after) / before;
}

double round1(double pct) {
    const double r = std::round(pct * 10.0) / 10.0;
    return r == 0.0 ? 0.0 : r;  // no "-0.0"
}

double lpt_makespan(const std::vector<double>& jobs, unsigned slots) {
    if (slots < 1) throw Error(ErrorCode::kParameter, "at least one slot is required");
    std::vector<double> sorted = jobs;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    std::priority_queue<double, std::vector<double>, std::greater<>> loads;
    for (unsigned i = 0; i < slots; ++i) loads.push(0.0);
    for (double job : sorted) {
        const double least = loads.top();
        loads.pop();
        loads.push(least + job);
    }
    double makespan = 0.0;
    while (!loads.empty()) {
        makespan = std::max(makespan, loads.top());
        loads.pop();
    }
    return makespan;
}

ComparisonReport compare(const Measured& m, Mode mode) {
    ComparisonReport r;
    r.mode = mode;
    r.measured = true;
    r.combined_time_hours = m.combined_hours;
    r.merged_time_hours = m.merged_hours;
    r.combined_cost = m.combined_cost;
    r.merged_cost = m.merged_cost;
    return finish(r);
}

ComparisonReport initial_setup(const CostScenario& s) {
    s.validate();
    if (s.measured_initial) return compare(*s.measured_initial, Mode::kInitial);
    if (s.per_language_hours.empty()) throw Error(ErrorCode::kParameter, "no per-language training hours given");

    std::vector<double> jobs;
    for (const auto& [label, h] : s.per_language_hours) jobs.push_back(h);
    const double total = std::accumulate(jobs.begin(), jobs.end(), 0.0);

    ComparisonReport r;
    r.mode = Mode::kInitial;
    r.combined_time_hours = s.combined_hours;
    r.merged_time_hours = lpt_makespan(jobs, s.parallel_slots) + s.merge_overhead_hours;
    r.combined_cost = s.combined_hours * s.rate_per_gpu_hour * s.combined_gpus;
    r.merged_cost = (total + s.merge_overhead_hours) * s.rate_per_gpu_hour;
    return finish(r);
}

ComparisonReport update_language(const CostScenario& s) {
    s.validate();
    if (s.measured_update) return compare(*s.measured_update, Mode::kUpdate);
    if (!s.update) throw Error(ErrorCode::kParameter, "scenario has no language update");

    ComparisonReport r;
    r.mode = Mode::kUpdate;
    r.combined_time_hours = s.update->combined_retrain_hours;
    r.merged_time_hours = s.update->retrain_hours + s.merge_overhead_hours;
    r.combined_cost = s.update->combined_retrain_hours * s.rate_per_gpu_hour * s.combined_gpus;
    r.merged_cost = (s.update->retrain_hours + s.merge_overhead_hours) * s.rate_per_gpu_hour;
    return finish(r);
}

void render_table(std::ostream& os, const std::vector<ComparisonReport>& reports) {
    char line[160];
    auto row = [&](const char* a, const std::string& b, const std::string& c) {
        std::snprintf(line, sizeof(line), "%-22s %-14s %s\n", a, b.c_str(), c.c_str());
        os << line;
    };
    auto hours = [](double h) {
        char b[32];
        std::snprintf(b, sizeof(b), "%.1fh", h);
        return std::string(b);
    };
    auto money = [](double c) {
        char b[32];
        std::snprintf(b, sizeof(b), "$%.1f", c);
        return std::string(b);
    };
    auto mode_name = [](const ComparisonReport& r) {
        return r.mode == Mode::kInitial ? "Initial Setup" : "Update/Add Language";
    };

    row("", "Retrain-All", "Train-Once, Merge-As-Needed");
    os << "Training Time\n";
    for (const auto& r : reports) {
        row(mode_name(r), hours(r.combined_time_hours), hours(r.merged_time_hours) + " " + pct_text(r.time_reduction_pct));
    }
    os << "Training Cost\n";
    for (const auto& r : reports) {
        row(mode_name(r), money(r.combined_cost), money(r.merged_cost) + " " + pct_text(r.cost_reduction_pct));
    }
}

}  // namespace lingmerge::cost
